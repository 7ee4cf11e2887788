// Response shapes of the studio HTTP API. The console performs no scoring or
// math of its own: every number it renders comes out of one of these bodies.

export interface Concept {
  id: string;
  parent_concept: string;
  image_paths: string[];
  attributes: string[];
  token_path: string | null;
  fingerprint: string;
}

export interface ComposeResponse {
  weight: number;
  attributes: string[];
  template: string;
  dim: number;
  feature_fingerprint: string;
  components: { token: string; attributes: Record<string, string> };
}

export interface PreviewImage {
  path: string;
  url: string;
}

export interface PreviewResponse {
  weight: number;
  feature_fingerprint: string;
  images: PreviewImage[];
  seed: number;
}

export interface RetrieveResult {
  image_id: string;
  score: number;
  rank: number;
}

export interface RetrieveResponse {
  index_id: string;
  weight: number;
  feature_fingerprint: string;
  results: RetrieveResult[];
}

export interface GairResultPayload {
  optimal_weight: number;
  weights: number[];
  scores: number[];
  object_scores: number[];
  context_scores: number[];
  preview_paths: string[][];
  context_image_paths: string[];
  curve_csv_path: string;
}

export interface Job {
  id: string;
  kind: "train" | "gair" | "eval";
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  concept_id: string | null;
  result_ref: string | null;
  result: GairResultPayload | { metrics: unknown } | null;
  error: string | null;
}

export interface CurvePoint {
  w: number;
  score: number;
}
