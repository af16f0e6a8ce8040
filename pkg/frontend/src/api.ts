// Thin typed client for the /v1 endpoints with latest-wins cancellation:
// firing a new request of the same kind aborts the in-flight one, so rapid
// edits cannot interleave stale responses.

import type {
  AnalyteInfo, ApiError, InterpretRequest, InterpretResponse, SweepRecord,
  SweepRequest,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, err: ApiError) {
    super(err.message);
    this.code = err.code;
    this.status = status;
  }
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;
  private readonly inflight = new Map<string, AbortController>();

  constructor(baseUrl = "", fetchImpl: FetchLike = (u, i) => fetch(u, i)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async post<T>(kind: string, path: string, body: unknown): Promise<T> {
    this.inflight.get(kind)?.abort();
    const controller = new AbortController();
    this.inflight.set(kind, controller);
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal: controller.signal,
    });
    if (this.inflight.get(kind) === controller) {
      this.inflight.delete(kind);
    }
    if (!resp.ok) {
      const payload = await resp.json().catch(() => ({ detail: null }));
      const detail = (payload as { detail?: ApiError | string }).detail;
      if (detail && typeof detail === "object" && "code" in detail) {
        throw new ApiRequestError(resp.status, detail);
      }
      throw new ApiRequestError(resp.status, {
        code: "http-error",
        message: typeof detail === "string" ? detail : `HTTP ${resp.status}`,
      });
    }
    return (await resp.json()) as T;
  }

  interpret(req: InterpretRequest): Promise<InterpretResponse> {
    return this.post<InterpretResponse>("interpret", "/v1/interpret", req);
  }

  sweep(req: SweepRequest): Promise<SweepRecord[]> {
    return this.post<SweepRecord[]>("sweep", "/v1/sweep", req);
  }

  async analytes(): Promise<AnalyteInfo[]> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/analytes`);
    if (!resp.ok) {
      throw new ApiRequestError(resp.status, { code: "http-error", message: `HTTP ${resp.status}` });
    }
    return (await resp.json()) as AnalyteInfo[];
  }
}
