/** Minimal dependency-free SVG line charts. */

export interface ChartOptions {
  width?: number;
  height?: number;
  xLabel?: string;
  yLabel?: string;
}

const MARGIN = { top: 10, right: 10, bottom: 28, left: 40 };

export function linePath(
  points: [number, number][],
  width: number,
  height: number,
): string {
  if (points.length === 0) return "";
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys, 0);
  const yMax = Math.max(...ys, 1e-12);
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const sx = (x: number) =>
    MARGIN.left + (xMax === xMin ? 0 : ((x - xMin) / (xMax - xMin)) * plotW);
  const sy = (y: number) =>
    MARGIN.top + plotH - ((y - yMin) / (yMax - yMin)) * plotH;
  return points
    .map(([x, y], i) => `${i === 0 ? "M" : "L"}${sx(x).toFixed(1)},${sy(y).toFixed(1)}`)
    .join(" ");
}

export function renderLineChart(
  points: [number, number][],
  options: ChartOptions = {},
): SVGSVGElement {
  const width = options.width ?? 320;
  const height = options.height ?? 220;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "chart");

  const axes = document.createElementNS("http://www.w3.org/2000/svg", "path");
  axes.setAttribute(
    "d",
    `M${MARGIN.left},${MARGIN.top} V${height - MARGIN.bottom} H${width - MARGIN.right}`,
  );
  axes.setAttribute("class", "chart-axes");
  svg.appendChild(axes);

  const line = document.createElementNS("http://www.w3.org/2000/svg", "path");
  line.setAttribute("d", linePath(points, width, height));
  line.setAttribute("class", "chart-line");
  svg.appendChild(line);

  if (options.xLabel) {
    const x = document.createElementNS("http://www.w3.org/2000/svg", "text");
    x.setAttribute("x", String(width / 2));
    x.setAttribute("y", String(height - 6));
    x.setAttribute("class", "chart-label");
    x.textContent = options.xLabel;
    svg.appendChild(x);
  }
  if (options.yLabel) {
    const y = document.createElementNS("http://www.w3.org/2000/svg", "text");
    y.setAttribute("x", "8");
    y.setAttribute("y", String(MARGIN.top + 10));
    y.setAttribute("class", "chart-label");
    y.textContent = options.yLabel;
    svg.appendChild(y);
  }
  return svg;
}
