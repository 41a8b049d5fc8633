// Thin HTTP client for the tuning service. The fetch implementation is
// injectable so tests can run against a scripted transport.

import type {
  DetectionOut,
  EvaluateRequest,
  EvaluateResponse,
  FuseRequest,
  FuseResponse,
  GroundTruthOut,
  ImagesPage,
  Params,
} from "./types.js";

export interface Transport {
  fuse(request: FuseRequest): Promise<FuseResponse>;
  evaluate(request: EvaluateRequest): Promise<EvaluateResponse>;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`service error ${status}: ${JSON.stringify(detail)}`);
  }
}

export class ApiClient implements Transport {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    const body = await response.json();
    if (!response.ok) throw new ApiError(response.status, body.detail ?? body);
    return body as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    const body = await response.json();
    if (!response.ok) throw new ApiError(response.status, body.detail ?? body);
    return body as T;
  }

  images(page = 1, pageSize = 500): Promise<ImagesPage> {
    return this.getJson(`/api/images?page=${page}&page_size=${pageSize}`);
  }

  detections(imageId: string, source: string, condition = "N"): Promise<DetectionOut[] | GroundTruthOut[]> {
    const id = encodeURIComponent(imageId);
    return this.getJson(
      `/api/images/${id}/detections?source=${encodeURIComponent(source)}&condition=${condition}`,
    );
  }

  defaults(): Promise<Params> {
    return this.getJson("/api/params/defaults");
  }

  fuse(request: FuseRequest): Promise<FuseResponse> {
    return this.postJson("/api/fuse", request);
  }

  evaluate(request: EvaluateRequest): Promise<EvaluateResponse> {
    return this.postJson("/api/evaluate", request);
  }

  pixelsUrl(imageId: string, condition = "N"): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}/pixels?condition=${condition}`;
  }
}
