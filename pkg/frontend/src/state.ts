/** Console view state.
 *
 * Verdicts shown anywhere in the UI are copied verbatim from the most recent
 * service response: summaries carry the committed threshold's verdicts, and a
 * slider preview only re-badges the images named in the what-if `flips`
 * array. The client never recomputes `count > c` itself.
 */
import type { ImageSummary, MetricsResponse, ThresholdFlip } from "./types.js";

export interface ViewState {
  images: ImageSummary[];
  selectedId: string | null;
  sliderC: number;
  committedC: number;
  alpha: number;
  /** image_id -> previewed verdict from the last uncommitted what-if */
  previewFlips: Map<string, 0 | 1>;
  metrics: MetricsResponse | null;
  error: string | null;
}

export function initialState(): ViewState {
  return {
    images: [],
    selectedId: null,
    sliderC: 0,
    committedC: 0,
    alpha: 0.35,
    previewFlips: new Map(),
    metrics: null,
    error: null,
  };
}

export function clampThreshold(c: number): number {
  return Math.max(0, Math.round(c));
}

export function setImages(state: ViewState, images: ImageSummary[]): ViewState {
  const committedC = images.length > 0 ? images[0].c : state.committedC;
  return { ...state, images, committedC, error: null };
}

/** Record a slider preview: only the service-reported flips change badges. */
export function applyWhatIf(
  state: ViewState,
  c: number,
  flips: ThresholdFlip[],
  committed: boolean,
): ViewState {
  if (committed) {
    return { ...state, sliderC: c, committedC: c, previewFlips: new Map() };
  }
  const previewFlips = new Map<string, 0 | 1>();
  for (const flip of flips) {
    previewFlips.set(flip.image_id, flip.new);
  }
  return { ...state, sliderC: c, previewFlips };
}

/** The verdict to display for an image under the current preview. */
export function displayedVerdict(state: ViewState, image: ImageSummary): 0 | 1 {
  const previewed = state.previewFlips.get(image.image_id);
  return previewed === undefined ? image.verdict : previewed;
}

export function isPreviewed(state: ViewState, imageId: string): boolean {
  return state.previewFlips.has(imageId);
}

/** Serialize concurrent calls per key: later calls supersede earlier ones. */
export class InFlightGate {
  private latest = new Map<string, number>();

  async run<T>(key: string, task: () => Promise<T>): Promise<T | undefined> {
    const ticket = (this.latest.get(key) ?? 0) + 1;
    this.latest.set(key, ticket);
    const result = await task();
    if (this.latest.get(key) !== ticket) {
      return undefined; // superseded while in flight
    }
    return result;
  }
}
