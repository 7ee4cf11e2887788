// Browser entry point: wires the draft editor, preview panel, results grid,
// and weight-search panel to the studio API.

import { StudioApi } from "./api.js";
import { GairPanel, renderGairPanel } from "./gairPanel.js";
import { loadSession, saveSession } from "./persist.js";
import { PreviewPanel, renderPreviewPanel } from "./previewPanel.js";
import { gridPage, renderResultsGrid, retrieve } from "./resultsGrid.js";
import {
  canUndo,
  currentDraft,
  editDraft,
  newSession,
  recordOnDraft,
  undo,
  type ConsoleSession,
} from "./state.js";
import { formatWeight, replaceChildren } from "./view.js";

const PAGE_SIZE = 12;

function query<T extends Element>(selector: string): T {
  const el = document.querySelector<T>(selector);
  if (!el) {
    throw new Error(`missing element ${selector}`);
  }
  return el;
}

export async function startConsole(): Promise<void> {
  const api = new StudioApi("");
  const conceptInput = query<HTMLInputElement>("#concept-id");
  const captionInput = query<HTMLInputElement>("#caption");
  const weightSlider = query<HTMLInputElement>("#weight");
  const weightLabel = query<HTMLElement>("#weight-label");
  const indexInput = query<HTMLInputElement>("#index-id");
  const undoButton = query<HTMLButtonElement>("#undo");
  const retrieveButton = query<HTMLButtonElement>("#retrieve");
  const gairButton = query<HTMLButtonElement>("#run-gair");
  const previewHost = query<HTMLElement>("#preview-panel");
  const resultsHost = query<HTMLElement>("#results-grid");
  const gairHost = query<HTMLElement>("#gair-panel");

  let session: ConsoleSession = loadSession(localStorage) ?? newSession();
  let page = 0;

  const renderAll = () => {
    if (session.history.length === 0) {
      return;
    }
    const draft = currentDraft(session);
    captionInput.value = draft.caption;
    weightSlider.value = String(draft.weight);
    weightLabel.textContent = formatWeight(draft.weight);
    undoButton.disabled = !canUndo(session);
    if (draft.lastRetrieval) {
      replaceChildren(resultsHost, renderResultsGrid(gridPage(draft.lastRetrieval, page, PAGE_SIZE)));
    }
    saveSession(localStorage, session);
  };

  const loadConcept = async (conceptId: string) => {
    const concept = await api.getConcept(conceptId);
    session = newSession(concept);
    const previewPanel = new PreviewPanel(api, concept, (state) => {
      recordOnDraft(session, { lastPreview: state.preview });
      replaceChildren(previewHost, renderPreviewPanel(state));
      renderAll();
    });
    const gairPanel = new GairPanel(api, session, (panel) => {
      replaceChildren(gairHost, renderGairPanel(panel));
      renderAll();
    });

    captionInput.oninput = () => {
      try {
        previewPanel.onDraftChange(editDraft(session, { caption: captionInput.value }));
      } catch {
        return; // invalid caption (token chip count); keep last good draft
      }
      renderAll();
    };
    weightSlider.oninput = () => {
      previewPanel.onDraftChange(editDraft(session, { weight: Number(weightSlider.value) }));
      renderAll();
    };
    undoButton.onclick = () => {
      if (canUndo(session)) {
        previewPanel.onDraftChange(undo(session));
        renderAll();
      }
    };
    retrieveButton.onclick = async () => {
      const response = await retrieve(api, currentDraft(session), indexInput.value);
      page = 0;
      recordOnDraft(session, { lastRetrieval: response });
      renderAll();
    };
    gairButton.onclick = async () => {
      await gairPanel.start([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
      renderAll();
    };
    gairHost.onclick = (event) => {
      if ((event.target as Element).classList.contains("revert")) {
        gairPanel.revert();
        renderAll();
      }
    };
    resultsHost.onclick = (event) => {
      const target = event.target as Element;
      const draft = currentDraft(session);
      if (!draft.lastRetrieval) {
        return;
      }
      const pages = gridPage(draft.lastRetrieval, page, PAGE_SIZE).pageCount;
      if (target.classList.contains("next-page")) {
        page = Math.min(page + 1, pages - 1);
      } else if (target.classList.contains("prev-page")) {
        page = Math.max(page - 1, 0);
      }
      renderAll();
    };

    previewPanel.onDraftChange(currentDraft(session));
    renderAll();
  };

  conceptInput.onchange = () => void loadConcept(conceptInput.value);
  if (session.concept) {
    conceptInput.value = session.concept.id;
    await loadConcept(session.concept.id);
  }
  renderAll();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void startConsole();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void startConsole());
}
