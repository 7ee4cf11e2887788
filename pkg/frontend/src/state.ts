// Console state: the query draft being edited and the session's append-only
// draft history with an undo cursor.

import type { Concept, CurvePoint, PreviewResponse, RetrieveResponse } from "./types.js";

export const TOKEN_CHIP = "{*}";

export interface QueryDraft {
  conceptId: string;
  caption: string; // must contain exactly one token chip
  attributes: string[];
  weight: number; // [0, 1]
  lastPreview: PreviewResponse | null;
  lastRetrieval: RetrieveResponse | null;
}

export function validateDraft(draft: QueryDraft): void {
  if (draft.weight < 0 || draft.weight > 1) {
    throw new Error(`weight ${draft.weight} outside [0, 1]`);
  }
  const chips = draft.caption.split(TOKEN_CHIP).length - 1;
  if (chips !== 1) {
    throw new Error(`caption must contain exactly one ${TOKEN_CHIP} chip, found ${chips}`);
  }
}

export function newDraft(conceptId: string, attributes: string[]): QueryDraft {
  return {
    conceptId,
    caption: "image of a {*} {c}",
    attributes,
    weight: 1.0,
    lastPreview: null,
    lastRetrieval: null,
  };
}

export interface ConsoleSession {
  concept: Concept | null;
  // Every draft ever current in this session, in order. Never truncated:
  // undo moves the cursor back, new edits append.
  history: QueryDraft[];
  cursor: number;
  gairCurve: CurvePoint[] | null;
  preGairWeight: number | null;
}

export function newSession(concept: Concept | null = null): ConsoleSession {
  const session: ConsoleSession = {
    concept,
    history: [],
    cursor: -1,
    gairCurve: null,
    preGairWeight: null,
  };
  if (concept) {
    pushDraft(session, newDraft(concept.id, concept.attributes.slice(0, 5)));
  }
  return session;
}

export function currentDraft(session: ConsoleSession): QueryDraft {
  const draft = session.history[session.cursor];
  if (!draft) {
    throw new Error("session has no draft yet");
  }
  return draft;
}

export function pushDraft(session: ConsoleSession, draft: QueryDraft): void {
  validateDraft(draft);
  session.history.push(draft);
  session.cursor = session.history.length - 1;
}

export function editDraft(session: ConsoleSession, changes: Partial<QueryDraft>): QueryDraft {
  const next = { ...currentDraft(session), ...changes };
  pushDraft(session, next);
  return next;
}

export function canUndo(session: ConsoleSession): boolean {
  return session.cursor > 0;
}

export function undo(session: ConsoleSession): QueryDraft {
  if (!canUndo(session)) {
    throw new Error("nothing to undo");
  }
  session.cursor -= 1;
  return currentDraft(session);
}

/** Record a backend response on the current draft without growing history. */
export function recordOnDraft(
  session: ConsoleSession,
  changes: Pick<Partial<QueryDraft>, "lastPreview" | "lastRetrieval">,
): void {
  session.history[session.cursor] = { ...currentDraft(session), ...changes };
}
