/** Console entry point: wires state, API client and views together. */
import { ApiClient, ServiceError } from "./api.js";
import {
  applyWhatIf,
  clampThreshold,
  InFlightGate,
  initialState,
  setImages,
  type ViewState,
} from "./state.js";
import { renderDetail, renderErrorPanel, renderGallery, renderMetrics } from "./views.js";

const api = new ApiClient();
const gate = new InFlightGate();
let state: ViewState = initialState();

const root = document.getElementById("app")!;

function setState(next: ViewState): void {
  state = next;
  void render();
}

async function render(): Promise<void> {
  root.replaceChildren();

  if (state.error !== null) {
    root.appendChild(renderErrorPanel(state.error));
  }

  const slider = document.createElement("div");
  slider.className = "threshold-bar";
  slider.innerHTML = `
    <label>threshold c
      <input id="c-slider" type="range" min="0" max="50" step="1" value="${state.sliderC}">
      <span id="c-value">${state.sliderC}</span>
    </label>
    <button id="c-commit">commit</button>
    <span class="committed">committed: ${state.committedC}</span>
  `;
  slider.querySelector<HTMLInputElement>("#c-slider")!.addEventListener("input", (event) => {
    const c = clampThreshold(Number((event.target as HTMLInputElement).value));
    void previewThreshold(c);
  });
  slider.querySelector<HTMLButtonElement>("#c-commit")!.addEventListener("click", () => {
    void commitThreshold(state.sliderC);
  });
  root.appendChild(slider);

  root.appendChild(renderGallery(state, (imageId) => {
    setState({ ...state, selectedId: imageId });
  }));

  if (state.selectedId !== null) {
    try {
      const detail = await api.getImage(state.selectedId);
      root.appendChild(
        renderDetail(state, detail, api,
          (row, col, label) => void overrideTile(row, col, label),
          (status) => void reviewImage(status)),
      );
    } catch (err) {
      root.appendChild(renderErrorPanel(describe(err)));
    }
  }

  root.appendChild(renderMetrics(state.metrics));
}

function describe(err: unknown): string {
  if (err instanceof ServiceError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

async function refresh(): Promise<void> {
  try {
    const images = await gate.run("images", () => api.listImages());
    if (images === undefined) return;
    let next = setImages({ ...state, sliderC: state.sliderC }, images);
    try {
      const metrics = await api.getMetrics();
      next = { ...next, metrics };
    } catch (err) {
      if (!(err instanceof ServiceError && err.status === 409)) throw err;
      next = { ...next, metrics: null };
    }
    setState(next);
  } catch (err) {
    setState({ ...state, error: describe(err) });
  }
}

async function previewThreshold(c: number): Promise<void> {
  try {
    const resp = await gate.run("threshold", () => api.whatIfThreshold(c, false));
    if (resp === undefined) return;
    setState(applyWhatIf(state, resp.c, resp.flips, resp.committed));
  } catch (err) {
    setState({ ...state, error: describe(err) });
  }
}

async function commitThreshold(c: number): Promise<void> {
  try {
    const resp = await api.whatIfThreshold(c, true);
    state = applyWhatIf(state, resp.c, resp.flips, resp.committed);
    await refresh();
  } catch (err) {
    setState({ ...state, error: describe(err) });
  }
}

async function overrideTile(row: number, col: number, label: 0 | 1): Promise<void> {
  if (state.selectedId === null) return;
  try {
    await api.overrideTile(state.selectedId, row, col, label);
    await refresh();
  } catch (err) {
    setState({ ...state, error: describe(err) });
  }
}

async function reviewImage(status: "unreviewed" | "confirmed" | "disputed"): Promise<void> {
  if (state.selectedId === null) return;
  try {
    await api.review(state.selectedId, status);
    await refresh();
  } catch (err) {
    setState({ ...state, error: describe(err) });
  }
}

void refresh();
