// Session persistence. The whole console state is (session history + backend
// state); storing the session lets a page reload reproduce the last rendered
// panels without guessing.

import type { ConsoleSession } from "./state.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const KEY = "tokenstudio-console-session";

export function saveSession(storage: StorageLike, session: ConsoleSession): void {
  storage.setItem(KEY, JSON.stringify(session));
}

export function loadSession(storage: StorageLike): ConsoleSession | null {
  const raw = storage.getItem(KEY);
  if (!raw) {
    return null;
  }
  return JSON.parse(raw) as ConsoleSession;
}

export class MemoryStorage implements StorageLike {
  private map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}
