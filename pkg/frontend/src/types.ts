/** JSON payloads served by the review service. */

export interface ImageSummary {
  image_id: string;
  uploaded_at: number;
  rows: number;
  cols: number;
  n_tiles: number;
  corroded_count: number;
  c: number;
  verdict: 0 | 1;
  areal_percent: number;
  review_status: "unreviewed" | "confirmed" | "disputed";
  n_overrides: number;
}

export interface ImageDetail extends ImageSummary {
  tile_probs: number[];
  tile_verdicts: number[];
  effective_verdicts: number[];
  overrides: Record<string, number>;
}

export interface ThresholdFlip {
  image_id: string;
  old: 0 | 1;
  new: 0 | 1;
}

export interface ThresholdResponse {
  c: number;
  committed: boolean;
  flips: ThresholdFlip[];
}

export interface MetricsResponse {
  c: number;
  n_confirmed: number;
  confusion: { tn: number; fp: number; fn: number; tp: number };
  rates: { tpr: number; fpr: number; ppv: number; f1: number };
  roc: { points: [number, number][]; auc: number } | null;
}

export interface ModelInfo {
  path: string | null;
  arch: Record<string, unknown>;
  num_params: number;
  default_c: number;
}

export interface ApiError {
  code: string;
  message: string;
}
