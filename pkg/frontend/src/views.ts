/** DOM builders for the gallery, inspection detail and metrics panels.
 *
 * All verdict strings come from service-provided fields (or the preview map
 * fed by the service's what-if response); nothing here compares counts to
 * thresholds.
 */
import type { ApiClient } from "./api.js";
import { renderLineChart } from "./charts.js";
import { countReadout, formatPercent, formatRate, overrideKey, verdictLabel } from "./format.js";
import { displayedVerdict, isPreviewed, type ViewState } from "./state.js";
import type { ImageDetail, MetricsResponse } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderErrorPanel(message: string): HTMLElement {
  const panel = el("div", "error-panel");
  panel.appendChild(el("strong", undefined, "service error"));
  panel.appendChild(el("p", undefined, message));
  return panel;
}

export function renderGallery(
  state: ViewState,
  onSelect: (imageId: string) => void,
): HTMLElement {
  const list = el("div", "gallery");
  if (state.images.length === 0) {
    list.appendChild(el("p", "empty", "no images uploaded yet"));
    return list;
  }
  for (const image of state.images) {
    const verdict = displayedVerdict(state, image);
    const card = el("button", `card verdict-${verdictLabel(verdict)}`);
    card.dataset.imageId = image.image_id;
    if (image.image_id === state.selectedId) card.classList.add("selected");
    if (isPreviewed(state, image.image_id)) card.classList.add("previewed");
    card.appendChild(el("span", "card-id", image.image_id));
    card.appendChild(el("span", "card-verdict", verdictLabel(verdict)));
    card.appendChild(el("span", "card-percent", formatPercent(image.areal_percent)));
    card.appendChild(el("span", "card-status", image.review_status));
    card.addEventListener("click", () => onSelect(image.image_id));
    list.appendChild(card);
  }
  return list;
}

export function renderDetail(
  state: ViewState,
  detail: ImageDetail,
  api: ApiClient,
  onOverride: (row: number, col: number, label: 0 | 1) => void,
  onReview: (status: "unreviewed" | "confirmed" | "disputed") => void,
): HTMLElement {
  const panel = el("section", "detail");

  const header = el("header", "detail-header");
  header.appendChild(el("h2", undefined, detail.image_id));
  header.appendChild(
    el("span", `badge verdict-${verdictLabel(detail.verdict)}`, verdictLabel(detail.verdict)),
  );
  header.appendChild(el("span", "readout", countReadout(detail.corroded_count, detail.n_tiles)));
  header.appendChild(el("span", "readout", formatPercent(detail.areal_percent)));
  panel.appendChild(header);

  const img = el("img", "heatmap");
  img.src = api.heatmapUrl(detail.image_id, state.alpha);
  img.alt = `verdict overlay for ${detail.image_id}`;
  panel.appendChild(img);

  const grid = el("div", "tile-grid");
  grid.style.gridTemplateColumns = `repeat(${detail.cols}, 1fr)`;
  for (let row = 0; row < detail.rows; row++) {
    for (let col = 0; col < detail.cols; col++) {
      const index = row * detail.cols + col;
      const verdict = detail.effective_verdicts[index] as 0 | 1;
      const cell = el("button", `tile verdict-${verdictLabel(verdict)}`);
      cell.title = `tile (${row}, ${col}) p=${detail.tile_probs[index].toFixed(3)}`;
      if (overrideKey(row, col) in detail.overrides) {
        cell.classList.add("overridden");
        cell.appendChild(el("span", "override-badge", "✎"));
      }
      cell.addEventListener("click", () => onOverride(row, col, verdict === 1 ? 0 : 1));
      grid.appendChild(cell);
    }
  }
  panel.appendChild(grid);

  const review = el("div", "review-bar");
  for (const status of ["confirmed", "disputed", "unreviewed"] as const) {
    const button = el("button", "review-button", status);
    if (detail.review_status === status) button.classList.add("active");
    button.addEventListener("click", () => onReview(status));
    review.appendChild(button);
  }
  panel.appendChild(review);
  return panel;
}

export function renderMetrics(metrics: MetricsResponse | null): HTMLElement {
  const panel = el("section", "metrics");
  panel.appendChild(el("h2", undefined, "metrics"));
  if (metrics === null) {
    panel.appendChild(el("p", "empty", "confirm at least one image to compute metrics"));
    return panel;
  }
  const { tn, fp, fn, tp } = metrics.confusion;
  const table = el("table", "confusion");
  for (const [name, value] of [["TN", tn], ["FP", fp], ["FN", fn], ["TP", tp]] as const) {
    const row = el("tr");
    row.appendChild(el("th", undefined, name));
    row.appendChild(el("td", undefined, String(value)));
    table.appendChild(row);
  }
  panel.appendChild(table);
  const rates = el("p", "rates");
  rates.textContent =
    `TPR ${formatRate(metrics.rates.tpr)}  FPR ${formatRate(metrics.rates.fpr)}  ` +
    `PPV ${formatRate(metrics.rates.ppv)}  F1 ${formatRate(metrics.rates.f1)}`;
  panel.appendChild(rates);
  if (metrics.roc) {
    panel.appendChild(el("p", "auc", `ROC AUC ${metrics.roc.auc.toFixed(4)}`));
    panel.appendChild(renderLineChart(metrics.roc.points, { xLabel: "FPR", yLabel: "TPR" }));
  } else {
    panel.appendChild(el("p", "empty", "ROC needs both classes among confirmed images"));
  }
  return panel;
}
