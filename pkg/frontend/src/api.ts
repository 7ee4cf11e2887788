// Thin typed client over the studio HTTP API. The fetch function is injected
// so tests can run against a scripted backend and record every request.

import type {
  ComposeResponse,
  Concept,
  Job,
  PreviewResponse,
  RetrieveResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface ComposeParams {
  concept_id: string;
  weight: number;
  template?: string;
  attributes?: string[];
}

export class StudioApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => globalThis.fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return JSON.parse(text) as T;
  }

  getConcept(conceptId: string): Promise<Concept> {
    return this.request("GET", `/concepts/${conceptId}`);
  }

  compose(params: ComposeParams): Promise<ComposeResponse> {
    return this.request("POST", "/queries/compose", params);
  }

  preview(params: ComposeParams & { n?: number; seed?: number }): Promise<PreviewResponse> {
    return this.request("POST", "/queries/preview", params);
  }

  retrieve(params: ComposeParams & { index_id: string; top_k?: number }): Promise<RetrieveResponse> {
    return this.request("POST", "/queries/retrieve", params);
  }

  startGair(params: {
    concept_id: string;
    template?: string;
    attributes?: string[];
    grid?: number[];
    previews_per_weight?: number;
    seed?: number;
  }): Promise<Job> {
    return this.request("POST", "/queries/gair", params);
  }

  getJob(jobId: string): Promise<Job> {
    return this.request("GET", `/jobs/${jobId}`);
  }

  previewUrl(ref: { url: string }): string {
    return this.baseUrl + ref.url;
  }
}
