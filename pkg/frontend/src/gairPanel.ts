// Weight-search panel: start the job, poll it, plot the score-vs-weight
// curve, move the slider to the chosen weight, and offer a one-click revert.

import type { StudioApi } from "./api.js";
import type { CurvePoint, GairResultPayload, Job } from "./types.js";
import type { ConsoleSession } from "./state.js";
import { currentDraft, editDraft } from "./state.js";
import { formatScore, formatProgress, formatWeight, h, type VNode } from "./view.js";

export interface GairPanelOptions {
  pollMs?: number;
  previewsPerWeight?: number;
  seed?: number;
}

export class GairPanel {
  lastJob: Job | null = null;

  constructor(
    private api: StudioApi,
    private session: ConsoleSession,
    private onUpdate: (panel: GairPanel) => void,
    private options: GairPanelOptions = {},
  ) {}

  get curve(): CurvePoint[] | null {
    return this.session.gairCurve;
  }

  get canRevert(): boolean {
    return this.session.preGairWeight !== null;
  }

  /** Start a search over `grid`; resolves when the job finishes. */
  async start(grid: number[]): Promise<Job> {
    const draft = currentDraft(this.session);
    this.session.preGairWeight = draft.weight;
    let job = await this.api.startGair({
      concept_id: draft.conceptId,
      template: draft.caption,
      attributes: draft.attributes,
      grid,
      previews_per_weight: this.options.previewsPerWeight ?? 4,
      seed: this.options.seed ?? 0,
    });
    this.lastJob = job;
    this.onUpdate(this);

    const pollMs = this.options.pollMs ?? 250;
    while (job.state === "queued" || job.state === "running") {
      await sleep(pollMs);
      job = await this.api.getJob(job.id);
      this.lastJob = job;
      this.onUpdate(this);
    }

    if (job.state === "done" && job.result && "optimal_weight" in job.result) {
      this.applyResult(job.result, grid);
    }
    this.onUpdate(this);
    return job;
  }

  private applyResult(result: GairResultPayload, requestedGrid: number[]): void {
    if (
      result.weights.length !== requestedGrid.length ||
      result.weights.some((w, i) => w !== requestedGrid[i])
    ) {
      throw new Error("backend curve is not aligned with the requested grid");
    }
    this.session.gairCurve = result.weights.map((w, i) => ({
      w,
      score: result.scores[i] as number,
    }));
    editDraft(this.session, { weight: result.optimal_weight });
  }

  /** Undo the automatic slider move. */
  revert(): void {
    if (this.session.preGairWeight === null) {
      return;
    }
    editDraft(this.session, { weight: this.session.preGairWeight });
    this.session.preGairWeight = null;
    this.onUpdate(this);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function renderGairPanel(panel: GairPanel): VNode {
  const job = panel.lastJob;
  const children: (VNode | string)[] = [];
  if (job) {
    children.push(
      h("div", { class: "job-state" },
        h("span", { class: "state" }, job.state),
        h("span", { class: "progress" }, formatProgress(job.progress)),
        job.error ? h("span", { class: "error" }, job.error) : null,
      ) as VNode,
    );
  }
  const curve = panel.curve;
  if (curve) {
    children.push(
      h(
        "ul",
        { class: "curve" },
        ...curve.map((point) =>
          h("li", { class: "curve-point", "data-w": formatWeight(point.w) },
            `${formatWeight(point.w)}: ${formatScore(point.score)}`),
        ),
      ),
    );
  }
  if (panel.canRevert) {
    children.push(h("button", { class: "revert" }, "revert weight"));
  }
  return h("div", { class: "gair-panel" }, ...children);
}
