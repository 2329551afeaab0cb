/** Trailing-edge debounce plus a latest-wins async runner. */

export interface Debounced<A extends unknown[]> {
  call(...args: A): void;
  cancel(): void;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return {
    call(...args: A) {
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(() => {
        timer = null;
        fn(...args);
      }, waitMs);
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
  };
}

/**
 * Runs async tasks so that only the most recent one can deliver a result:
 * starting a new task aborts the in-flight one, and a superseded task's
 * result resolves to undefined rather than clobbering newer state.
 */
export class LatestWins {
  private seq = 0;
  private controller: AbortController | null = null;

  async run<T>(task: (signal: AbortSignal) => Promise<T>): Promise<T | undefined> {
    this.controller?.abort();
    const mine = ++this.seq;
    const controller = new AbortController();
    this.controller = controller;
    try {
      const result = await task(controller.signal);
      return mine === this.seq ? result : undefined;
    } catch (err) {
      if ((err as Error).name === "AbortError") return undefined;
      if (mine !== this.seq) return undefined;
      throw err;
    }
  }

  cancel(): void {
    this.controller?.abort();
    this.controller = null;
    this.seq++;
  }
}
