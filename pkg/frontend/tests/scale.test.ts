import { describe, expect, it } from "vitest";

import {
  fitBounds,
  pan,
  screenToWorld,
  worldToScreen,
  zoomAt,
} from "../src/scale.js";
import { nearestNeedlePoint, sceneBounds } from "../src/render.js";
import { Snapshot } from "../src/protocol.js";

describe("viewport mapping", () => {
  const v = { pxPerMm: 4, originX: 100, originY: 300 };

  it("round-trips world and screen", () => {
    for (const p of [[0, 0], [10, -3], [-7.5, 12.25]] as [number, number][]) {
      const back = screenToWorld(v, worldToScreen(v, p));
      expect(back[0]).toBeCloseTo(p[0], 12);
      expect(back[1]).toBeCloseTo(p[1], 12);
    }
  });

  it("flips the y axis", () => {
    const [, yUp] = worldToScreen(v, [0, 10]);
    const [, yDn] = worldToScreen(v, [0, -10]);
    expect(yUp).toBeLessThan(yDn);
  });

  it("pan moves the origin in pixels", () => {
    const moved = pan(v, 10, -5);
    expect(worldToScreen(moved, [0, 0])).toEqual([110, 295]);
  });

  it("zoomAt keeps the anchor point fixed", () => {
    const anchorWorld: [number, number] = [12, 5];
    const anchorScreen = worldToScreen(v, anchorWorld);
    const zoomed = zoomAt(v, 1.5, anchorScreen[0], anchorScreen[1]);
    const after = worldToScreen(zoomed, anchorWorld);
    expect(after[0]).toBeCloseTo(anchorScreen[0], 9);
    expect(after[1]).toBeCloseTo(anchorScreen[1], 9);
    expect(zoomed.pxPerMm).toBeCloseTo(6, 12);
  });

  it("fitBounds centres the box", () => {
    const fitted = fitBounds(800, 600, -10, 30, -20, 20, 30);
    const c = worldToScreen(fitted, [10, 0]);
    expect(c[0]).toBeCloseTo(400, 6);
    expect(c[1]).toBeCloseTo(300, 6);
    const corner = worldToScreen(fitted, [-10, 20]);
    expect(corner[0]).toBeGreaterThanOrEqual(29);
    expect(corner[1]).toBeGreaterThanOrEqual(29);
  });
});

describe("scene helpers", () => {
  const snapshot: Snapshot = {
    step: 0,
    contact: true,
    depth_mm: 5,
    tip: { x_mm: 5, y_mm: 0.5, theta_rad: 0 },
    needle_mm: [[-10, 0], [0, 0.1], [5, 0.5]],
    constraints: [],
    layers: [
      { index: 0, mu_pa: 1, alpha: 1, gamma: 0, thickness_mm: 40,
        entry_mm: [[0, -40], [0, 40]] },
    ],
    exit_mm: [[80, -40], [80, 40]],
    template_x_mm: null,
    convergence: { iterations: 1, residual_m: 0, converged: true, clamp_events: 0 },
    inputs: {},
  };

  it("sceneBounds covers needle and boundaries", () => {
    const [x0, x1, y0, y1] = sceneBounds(snapshot);
    expect(x0).toBe(-10);
    expect(x1).toBe(80);
    expect(y0).toBe(-40);
    expect(y1).toBe(40);
  });

  it("nearestNeedlePoint picks the closest abscissa", () => {
    expect(nearestNeedlePoint(snapshot, 4.8)).toEqual([5, 0.5]);
    expect(nearestNeedlePoint(snapshot, -20)).toEqual([-10, 0]);
  });
});
