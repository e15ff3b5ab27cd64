// World (mm, y up) to screen (px, y down) mapping with pan and zoom.

export interface Viewport {
  pxPerMm: number;
  originX: number; // screen x of world (0, 0)
  originY: number;
}

export function worldToScreen(v: Viewport, p: [number, number]): [number, number] {
  return [v.originX + p[0] * v.pxPerMm, v.originY - p[1] * v.pxPerMm];
}

export function screenToWorld(v: Viewport, p: [number, number]): [number, number] {
  return [(p[0] - v.originX) / v.pxPerMm, (v.originY - p[1]) / v.pxPerMm];
}

export function pan(v: Viewport, dxPx: number, dyPx: number): Viewport {
  return { ...v, originX: v.originX + dxPx, originY: v.originY + dyPx };
}

/** Zoom by `factor` keeping the screen point (cx, cy) fixed. */
export function zoomAt(v: Viewport, factor: number, cx: number, cy: number): Viewport {
  const scale = v.pxPerMm * factor;
  return {
    pxPerMm: scale,
    originX: cx + (v.originX - cx) * factor,
    originY: cy + (v.originY - cy) * factor,
  };
}

/** Viewport that fits a world-box (mm) into width x height px with a margin. */
export function fitBounds(
  width: number,
  height: number,
  xMin: number,
  xMax: number,
  yMin: number,
  yMax: number,
  marginPx = 30,
): Viewport {
  const spanX = Math.max(xMax - xMin, 1e-6);
  const spanY = Math.max(yMax - yMin, 1e-6);
  const pxPerMm = Math.min(
    (width - 2 * marginPx) / spanX,
    (height - 2 * marginPx) / spanY,
  );
  const cx = (xMin + xMax) / 2;
  const cy = (yMin + yMax) / 2;
  return {
    pxPerMm,
    originX: width / 2 - cx * pxPerMm,
    originY: height / 2 + cy * pxPerMm,
  };
}
