// Ranked retrieval grid: backend order is displayed verbatim, scores and
// ranks come straight from the response, pages are client-side slices of the
// one ranked list, and a marked ground-truth image is highlighted.

import type { StudioApi } from "./api.js";
import type { RetrieveResponse, RetrieveResult } from "./types.js";
import type { QueryDraft } from "./state.js";
import { formatScore, h, type VNode } from "./view.js";

export interface GridPage {
  items: RetrieveResult[];
  page: number;
  pageCount: number;
}

export async function retrieve(
  api: StudioApi,
  draft: QueryDraft,
  indexId: string,
  topK?: number,
): Promise<RetrieveResponse> {
  return api.retrieve({
    concept_id: draft.conceptId,
    weight: draft.weight,
    template: draft.caption,
    attributes: draft.attributes,
    index_id: indexId,
    ...(topK !== undefined ? { top_k: topK } : {}),
  });
}

export function gridPage(
  response: RetrieveResponse,
  page: number,
  pageSize: number,
): GridPage {
  const pageCount = Math.max(1, Math.ceil(response.results.length / pageSize));
  const bounded = Math.min(Math.max(page, 0), pageCount - 1);
  return {
    items: response.results.slice(bounded * pageSize, (bounded + 1) * pageSize),
    page: bounded,
    pageCount,
  };
}

export function renderResultsGrid(
  page: GridPage,
  groundTruthId: string | null = null,
): VNode {
  if (page.items.length === 0) {
    return h("div", { class: "results-grid empty" },
      h("p", { class: "empty-state" }, "no results: the index is empty"));
  }
  return h(
    "div",
    { class: "results-grid" },
    ...page.items.map((item) => {
      const highlighted = groundTruthId !== null && item.image_id === groundTruthId;
      return h(
        "figure",
        { class: highlighted ? "result highlight" : "result", "data-rank": String(item.rank) },
        h("span", { class: "rank" }, String(item.rank)),
        h("span", { class: "image-id" }, item.image_id),
        h("span", { class: "score" }, formatScore(item.score)),
      );
    }),
    h("footer", { class: "pager" }, `page ${page.page + 1} of ${page.pageCount}`),
  );
}
