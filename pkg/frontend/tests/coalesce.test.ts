import { describe, expect, it } from "vitest";

import { createCoalescer } from "../src/coalesce.js";

function fakeClock() {
  let t = 0;
  const timers: { at: number; fn: () => void }[] = [];
  return {
    now: () => t,
    schedule: (fn: () => void, ms: number) => {
      timers.push({ at: t + ms, fn });
    },
    tick(to: number) {
      t = to;
      for (const timer of [...timers].sort((a, b) => a.at - b.at)) {
        if (timer.at <= t) {
          timers.splice(timers.indexOf(timer), 1);
          timer.fn();
        }
      }
    },
  };
}

describe("createCoalescer", () => {
  it("fires the first event immediately", () => {
    const clock = fakeClock();
    const c = createCoalescer(50, clock.schedule, clock.now);
    let fired = 0;
    c.submit("k", () => fired++);
    expect(fired).toBe(1);
  });

  it("coalesces a burst to the trailing value within the interval", () => {
    const clock = fakeClock();
    const c = createCoalescer(50, clock.schedule, clock.now);
    const seen: number[] = [];
    for (let i = 0; i < 10; i++) {
      c.submit("k", () => seen.push(i));
      clock.tick(clock.now() + 2);
    }
    clock.tick(100);
    expect(seen[0]).toBe(0); // leading edge
    expect(seen[seen.length - 1]).toBe(9); // trailing value always delivered
    expect(seen.length).toBeLessThanOrEqual(3);
  });

  it("keeps independent keys independent", () => {
    const clock = fakeClock();
    const c = createCoalescer(50, clock.schedule, clock.now);
    let a = 0;
    let b = 0;
    c.submit("a", () => a++);
    c.submit("b", () => b++);
    expect(a).toBe(1);
    expect(b).toBe(1);
  });

  it("respects the rate over a long drag", () => {
    const clock = fakeClock();
    const c = createCoalescer(50, clock.schedule, clock.now);
    let fired = 0;
    for (let ms = 0; ms <= 1000; ms += 5) {
      clock.tick(ms);
      c.submit("k", () => fired++);
    }
    clock.tick(1100);
    // 1 second of drag at <= 20 commands/s, plus leading and trailing edges
    expect(fired).toBeLessThanOrEqual(22);
    expect(fired).toBeGreaterThan(10);
  });

  it("flush delivers whatever is queued", () => {
    const clock = fakeClock();
    const c = createCoalescer(50, clock.schedule, clock.now);
    const seen: number[] = [];
    c.submit("k", () => seen.push(1));
    c.submit("k", () => seen.push(2));
    c.flush();
    expect(seen).toEqual([1, 2]);
  });
});
