/** Thin typed client over the review-service HTTP API.
 *
 * Every method returns exactly what the service sent; no verdicts or counts
 * are ever derived client-side.
 */
import type {
  ApiError,
  ImageDetail,
  ImageSummary,
  MetricsResponse,
  ModelInfo,
  ThresholdResponse,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let code = "http_error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as Partial<ApiError>;
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body: keep the HTTP status text
  }
  throw new ServiceError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  listImages(): Promise<ImageSummary[]> {
    return this.fetchFn(this.url("/api/images")).then((r) => unwrap<ImageSummary[]>(r));
  }

  getImage(imageId: string): Promise<ImageDetail> {
    return this.fetchFn(this.url(`/api/images/${imageId}`)).then((r) => unwrap<ImageDetail>(r));
  }

  heatmapUrl(imageId: string, alpha: number): string {
    return this.url(`/api/images/${imageId}/heatmap.png?alpha=${alpha}`);
  }

  uploadImage(bytes: ArrayBuffer | Uint8Array): Promise<ImageSummary> {
    return this.fetchFn(this.url("/api/images"), {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: bytes as BodyInit,
    }).then((r) => unwrap<ImageSummary>(r));
  }

  whatIfThreshold(c: number, commit = false): Promise<ThresholdResponse> {
    return this.fetchFn(this.url("/api/threshold"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ c, commit }),
    }).then((r) => unwrap<ThresholdResponse>(r));
  }

  overrideTile(imageId: string, row: number, col: number, label: 0 | 1): Promise<ImageDetail> {
    return this.fetchFn(this.url(`/api/images/${imageId}/tiles/${row}/${col}`), {
      method: "PATCH",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ label }),
    }).then((r) => unwrap<ImageDetail>(r));
  }

  review(
    imageId: string,
    status: "unreviewed" | "confirmed" | "disputed",
  ): Promise<ImageDetail> {
    return this.fetchFn(this.url(`/api/images/${imageId}/review`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ status }),
    }).then((r) => unwrap<ImageDetail>(r));
  }

  getMetrics(): Promise<MetricsResponse> {
    return this.fetchFn(this.url("/api/metrics")).then((r) => unwrap<MetricsResponse>(r));
  }

  getModel(): Promise<ModelInfo> {
    return this.fetchFn(this.url("/api/model")).then((r) => unwrap<ModelInfo>(r));
  }
}
