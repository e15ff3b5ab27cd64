// Rate limiter for slider drags: per key, at most one fire per interval,
// always ending with the latest value (trailing edge).

export interface Coalescer {
  submit(key: string, fire: () => void): void;
  flush(): void;
}

export function createCoalescer(
  minIntervalMs = 50,
  schedule: (fn: () => void, ms: number) => unknown = (fn, ms) => setTimeout(fn, ms),
  now: () => number = () => Date.now(),
): Coalescer {
  const lastFired = new Map<string, number>();
  const queued = new Map<string, () => void>();
  const timers = new Set<string>();

  function fireNow(key: string, fire: () => void) {
    lastFired.set(key, now());
    fire();
  }

  return {
    submit(key: string, fire: () => void) {
      const t = now();
      const last = lastFired.get(key) ?? -Infinity;
      if (t - last >= minIntervalMs && !timers.has(key)) {
        fireNow(key, fire);
        return;
      }
      queued.set(key, fire);
      if (!timers.has(key)) {
        timers.add(key);
        const wait = Math.max(0, minIntervalMs - (t - last));
        schedule(() => {
          timers.delete(key);
          const pending = queued.get(key);
          if (pending) {
            queued.delete(key);
            fireNow(key, pending);
          }
        }, wait);
      }
    },

    flush() {
      for (const [key, fire] of [...queued.entries()]) {
        queued.delete(key);
        fireNow(key, fire);
      }
    },
  };
}
