// compose-then-preview pipeline behind the draft editor. Slider/caption edits
// are debounced (300 ms default); at most one preview request chain is "live"
// at a time and stale responses are dropped (latest wins).

import type { StudioApi } from "./api.js";
import type { ComposeResponse, Concept, PreviewResponse } from "./types.js";
import type { QueryDraft } from "./state.js";
import { debounce, type Debounced } from "./debounce.js";
import { formatWeight, h, type VNode } from "./view.js";

export interface PreviewPanelState {
  compose: ComposeResponse;
  preview: PreviewResponse;
  trainingImagePaths: string[];
}

export interface PreviewPanelOptions {
  debounceMs?: number;
  previewCount?: number;
  seed?: number;
  trainingImagesShown?: number;
}

export class PreviewPanel {
  private generation = 0;
  private trigger: Debounced<[QueryDraft]>;
  state: PreviewPanelState | null = null;
  lastError: string | null = null;

  constructor(
    private api: StudioApi,
    private concept: Concept,
    private onState: (state: PreviewPanelState) => void,
    private options: PreviewPanelOptions = {},
  ) {
    this.trigger = debounce(
      (draft: QueryDraft) => void this.run(draft),
      options.debounceMs ?? 300,
    );
  }

  /** Debounced entry point: call on every draft change. */
  onDraftChange(draft: QueryDraft): void {
    this.trigger(draft);
  }

  /** Immediate (non-debounced) request chain; latest call wins. */
  async run(draft: QueryDraft): Promise<PreviewPanelState | null> {
    const ticket = ++this.generation;
    try {
      const params = {
        concept_id: draft.conceptId,
        weight: draft.weight,
        template: draft.caption,
        attributes: draft.attributes,
      };
      const compose = await this.api.compose(params);
      const preview = await this.api.preview({
        ...params,
        n: this.options.previewCount ?? 2,
        seed: this.options.seed ?? 0,
      });
      if (ticket !== this.generation) {
        return null; // a newer request superseded this one
      }
      this.state = {
        compose,
        preview,
        trainingImagePaths: this.concept.image_paths.slice(
          0,
          this.options.trainingImagesShown ?? 3,
        ),
      };
      this.lastError = null;
      this.onState(this.state);
      return this.state;
    } catch (error) {
      if (ticket === this.generation) {
        this.lastError = String(error);
      }
      return null;
    }
  }
}

/** Preview images side by side with a few training images of the concept. */
export function renderPreviewPanel(state: PreviewPanelState): VNode {
  return h(
    "div",
    { class: "preview-panel" },
    h("div", { class: "preview-meta" },
      h("span", { class: "weight" }, `w=${formatWeight(state.compose.weight)}`),
      h("span", { class: "fingerprint" }, state.preview.feature_fingerprint),
    ),
    h(
      "div",
      { class: "generated" },
      ...state.preview.images.map((image) =>
        h("img", { class: "generated-image", src: image.url, alt: image.path }),
      ),
    ),
    h(
      "div",
      { class: "training" },
      ...state.trainingImagePaths.map((path) =>
        h("img", { class: "training-image", src: `/${path}`, alt: path }),
      ),
    ),
  );
}
