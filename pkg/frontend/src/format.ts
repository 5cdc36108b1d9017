/** Pure display formatting; no classification arithmetic. */

export function formatPercent(arealPercent: number): string {
  return `${arealPercent.toFixed(1)}%`;
}

export function verdictLabel(verdict: 0 | 1): string {
  return verdict === 1 ? "corroded" : "intact";
}

export function countReadout(corrodedCount: number, nTiles: number): string {
  return `${corrodedCount} / ${nTiles} tiles`;
}

export function formatRate(value: number, defined = true): string {
  return defined ? value.toFixed(4) : "n/a";
}

export function overrideKey(row: number, col: number): string {
  return `${row},${col}`;
}
