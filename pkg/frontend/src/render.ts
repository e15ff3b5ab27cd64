// Canvas scene: tissue bands, needle polyline, base/template/tip dots and
// constraint crosses. Pure drawing from one snapshot; no physics here.

import { Snapshot } from "./protocol.js";
import { Viewport, worldToScreen } from "./scale.js";

const BAND_COLORS = ["#f2e3c6", "#dbc9a7", "#e8d7bb", "#cdbb98", "#f0e0c2"];

export function drawScene(
  ctx: CanvasRenderingContext2D,
  snapshot: Snapshot,
  v: Viewport,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  drawBands(ctx, snapshot, v, height);
  drawTemplate(ctx, snapshot, v, height);
  drawNeedle(ctx, snapshot, v);
  drawConstraints(ctx, snapshot, v);
  drawGlyphs(ctx, snapshot, v);
}

function drawBands(
  ctx: CanvasRenderingContext2D,
  snapshot: Snapshot,
  v: Viewport,
  height: number,
): void {
  const bounds = snapshot.layers.map((l) => l.entry_mm);
  if (snapshot.exit_mm) bounds.push(snapshot.exit_mm);
  for (let i = 0; i + 1 < bounds.length; i++) {
    const [a, b] = [bounds[i], bounds[i + 1]];
    ctx.beginPath();
    polyPath(ctx, v, [a[0], a[1], b[1], b[0]]);
    ctx.closePath();
    ctx.fillStyle = BAND_COLORS[i % BAND_COLORS.length];
    ctx.fill();
  }
  // last (or only) band extends to the right edge when there is no exit line
  if (!snapshot.exit_mm && bounds.length > 0) {
    const a = bounds[bounds.length - 1];
    const [x0] = worldToScreen(v, [a[0][0], a[0][1]]);
    ctx.fillStyle = BAND_COLORS[(bounds.length - 1) % BAND_COLORS.length];
    ctx.fillRect(x0, 0, ctx.canvas.width - x0, height);
  }
  ctx.strokeStyle = "#8a7a5c";
  ctx.lineWidth = 1;
  for (const b of bounds) {
    ctx.beginPath();
    polyPath(ctx, v, [b[0], b[1]]);
    ctx.stroke();
  }
}

function drawNeedle(ctx: CanvasRenderingContext2D, snapshot: Snapshot, v: Viewport): void {
  ctx.beginPath();
  polyPath(ctx, v, snapshot.needle_mm);
  ctx.strokeStyle = snapshot.convergence.converged ? "#1c3d6e" : "#c0392b";
  ctx.lineWidth = 2;
  ctx.stroke();
}

function drawConstraints(
  ctx: CanvasRenderingContext2D,
  snapshot: Snapshot,
  v: Viewport,
): void {
  ctx.strokeStyle = "#2266cc";
  ctx.lineWidth = 1.4;
  const r = 4;
  for (const c of snapshot.constraints) {
    const [x, y] = worldToScreen(v, [c.x_mm, c.y_mm]);
    ctx.beginPath();
    ctx.moveTo(x - r, y - r);
    ctx.lineTo(x + r, y + r);
    ctx.moveTo(x - r, y + r);
    ctx.lineTo(x + r, y - r);
    ctx.stroke();
  }
}

function drawTemplate(
  ctx: CanvasRenderingContext2D,
  snapshot: Snapshot,
  v: Viewport,
  height: number,
): void {
  if (snapshot.template_x_mm === null) return;
  const [x] = worldToScreen(v, [snapshot.template_x_mm, 0]);
  ctx.strokeStyle = "#3a9d4f";
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  ctx.moveTo(x, 0);
  ctx.lineTo(x, height);
  ctx.stroke();
  ctx.setLineDash([]);
  // template glyph on the needle at its abscissa
  const nearest = nearestNeedlePoint(snapshot, snapshot.template_x_mm);
  if (nearest) dot(ctx, worldToScreen(v, nearest), "#3a9d4f", 5);
}

function drawGlyphs(ctx: CanvasRenderingContext2D, snapshot: Snapshot, v: Viewport): void {
  const needle = snapshot.needle_mm;
  if (needle.length === 0) return;
  dot(ctx, worldToScreen(v, [needle[0][0], needle[0][1]]), "#111111", 5);
  dot(ctx, worldToScreen(v, [snapshot.tip.x_mm, snapshot.tip.y_mm]), "#d02020", 4.5);
}

export function nearestNeedlePoint(
  snapshot: Snapshot,
  xMm: number,
): [number, number] | null {
  let best: [number, number] | null = null;
  let bestDist = Infinity;
  for (const p of snapshot.needle_mm) {
    const d = Math.abs(p[0] - xMm);
    if (d < bestDist) {
      bestDist = d;
      best = [p[0], p[1]];
    }
  }
  return best;
}

function polyPath(ctx: CanvasRenderingContext2D, v: Viewport, pts: number[][]): void {
  pts.forEach((p, i) => {
    const [x, y] = worldToScreen(v, [p[0], p[1]]);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
}

function dot(
  ctx: CanvasRenderingContext2D,
  [x, y]: [number, number],
  color: string,
  r: number,
): void {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fillStyle = color;
  ctx.fill();
}

/** World-box of the scene in mm, for initial viewport fitting. */
export function sceneBounds(snapshot: Snapshot): [number, number, number, number] {
  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  const extend = (x: number, y: number) => {
    xMin = Math.min(xMin, x);
    xMax = Math.max(xMax, x);
    yMin = Math.min(yMin, y);
    yMax = Math.max(yMax, y);
  };
  for (const p of snapshot.needle_mm) extend(p[0], p[1]);
  for (const l of snapshot.layers) for (const p of l.entry_mm) extend(p[0], p[1]);
  if (snapshot.exit_mm) for (const p of snapshot.exit_mm) extend(p[0], p[1]);
  if (xMin > xMax) return [0, 1, 0, 1];
  return [xMin, xMax, yMin, yMax];
}
