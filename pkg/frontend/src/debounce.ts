// Trailing-edge debounce: rapid calls collapse, the last one fires after the
// quiet period. Keeps slider drags from flooding the backend.

export interface Debounced<Args extends unknown[]> {
  (...args: Args): void;
  cancel(): void;
  flush(): void;
}

export function debounce<Args extends unknown[]>(
  fn: (...args: Args) => void,
  waitMs: number,
): Debounced<Args> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: Args | null = null;

  const debounced = (...args: Args) => {
    pending = args;
    if (timer !== null) {
      clearTimeout(timer);
    }
    timer = setTimeout(() => {
      timer = null;
      const args2 = pending as Args;
      pending = null;
      fn(...args2);
    }, waitMs);
  };
  debounced.cancel = () => {
    if (timer !== null) {
      clearTimeout(timer);
      timer = null;
      pending = null;
    }
  };
  debounced.flush = () => {
    if (timer !== null) {
      clearTimeout(timer);
      timer = null;
      const args = pending as Args;
      pending = null;
      fn(...args);
    }
  };
  return debounced;
}
