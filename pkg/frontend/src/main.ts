// Steering panel: binds DOM controls to the session service and renders
// snapshots onto the canvas. All physics comes from the service.

import { connectSession, SessionClient } from "./client.js";
import { createCoalescer } from "./coalesce.js";
import { Command, commandLogToScript } from "./protocol.js";
import { drawScene, sceneBounds } from "./render.js";
import { fitBounds, pan, Viewport, zoomAt } from "./scale.js";
import { createSessionModel } from "./viewmodel.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d")!;
const model = createSessionModel();
let client: SessionClient | null = null;
let viewport: Viewport | null = null;
const sliderGate = createCoalescer(50); // <= 20 commands/s per slider

function send(command: Command): void {
  if (!client) return;
  const prepared = model.prepare(command);
  if (!client.send(prepared.text)) {
    // connection is down; the command never left, roll the sequence back
    model.onMessage({ type: "error", detail: "not connected",
                      expected_seq: prepared.seq });
  }
}

async function openSession(preset: string): Promise<void> {
  client?.close();
  const resp = await fetch("/sessions", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ preset }),
  });
  if (!resp.ok) {
    $("status").textContent = `session failed: ${await resp.text()}`;
    return;
  }
  const body = await resp.json();
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const url = `${proto}://${location.host}/session/${body.session_id}`;
  viewport = null;
  client = connectSession(url, {
    onMessage: (m) => {
      model.onMessage(m);
      requestFrame();
    },
    onState: (s) => {
      model.onConnection(s);
      updateBanner();
    },
  });
}

// --- rendering loop ---------------------------------------------------------

let framePending = false;

function requestFrame(): void {
  if (framePending) return;
  framePending = true;
  requestAnimationFrame(() => {
    framePending = false;
    renderFrame();
  });
}

function renderFrame(): void {
  const snapshot = model.snapshot;
  if (!snapshot) return;
  const token = model.snapshotToken;
  if (!viewport) {
    const [x0, x1, y0, y1] = sceneBounds(snapshot);
    viewport = fitBounds(canvas.width, canvas.height, x0, x1, y0, y1);
  }
  drawScene(ctx, snapshot, viewport, canvas.width, canvas.height);
  model.markRendered(token);
  updateReadout();
  updateBanner();
}

function updateReadout(): void {
  const s = model.snapshot;
  if (!s) return;
  $("readout").textContent =
    `tip (${s.tip.x_mm.toFixed(2)}, ${s.tip.y_mm.toFixed(2)}) mm | ` +
    `depth ${s.depth_mm.toFixed(2)} mm | step ${s.step}`;
  const lat = model.medianLatencyMs();
  $("latency").textContent = lat === null ? "" : `round trip ~${lat.toFixed(0)} ms`;
  const badge = $("converged");
  if (s.convergence.converged) {
    badge.textContent = `converged in ${s.convergence.iterations}`;
    badge.className = "ok";
  } else {
    badge.textContent = `NOT CONVERGED (${s.convergence.iterations} its, ` +
      `residual ${s.convergence.residual_m.toExponential(1)} m)`;
    badge.className = "bad";
  }
}

function updateBanner(): void {
  const banner = $("status");
  if (model.connection !== "open") {
    banner.textContent = model.connection === "connecting"
      ? "connecting…" : "disconnected — retrying";
    banner.className = "banner warn";
  } else if (model.lastError) {
    banner.textContent = model.lastError;
    banner.className = "banner bad";
  } else if (model.droppedTotal > 0) {
    banner.textContent = `live (feed dropped ${model.droppedTotal} snapshots)`;
    banner.className = "banner ok";
  } else {
    banner.textContent = "live";
    banner.className = "banner ok";
  }
}

// --- control wiring ---------------------------------------------------------

function stepSizeMm(): number {
  return parseFloat(($("stepsize") as HTMLSelectElement).value);
}

$("advance").addEventListener("click", () =>
  send({ cmd: "advance", payload: { dh_mm: stepSizeMm() } }));
$("retract").addEventListener("click", () =>
  send({ cmd: "retract", payload: { dh_mm: stepSizeMm() } }));
$("reset").addEventListener("click", () => send({ cmd: "reset", payload: {} }));

const lateral = $<HTMLInputElement>("lateral");
const slope = $<HTMLInputElement>("slope");

function sendBase(): void {
  send({
    cmd: "set_v_input",
    payload: {
      at: "base",
      deflection_mm: parseFloat(lateral.value),
      slope_rad: parseFloat(slope.value) / 1000, // slider is in mrad
    },
  });
}

lateral.addEventListener("input", () => sliderGate.submit("base", sendBase));
slope.addEventListener("input", () => sliderGate.submit("base", sendBase));

const templateToggle = $<HTMLInputElement>("template-toggle");
const templateOrd = $<HTMLInputElement>("template-ordinate");

function sendTemplate(): void {
  if (!templateToggle.checked) return;
  // the template prescribes its ordinate and zero slope
  send({
    cmd: "set_v_input",
    payload: {
      at: "template",
      deflection_mm: parseFloat(templateOrd.value),
      slope_rad: 0,
    },
  });
}

templateToggle.addEventListener("change", () => {
  if (templateToggle.checked) sendTemplate();
  else send({ cmd: "set_v_input", payload: { at: "template" } }); // unpin
});
templateOrd.addEventListener("input", () =>
  sliderGate.submit("template", sendTemplate));

const bevelDir = $<HTMLInputElement>("bevel-direction");
const bevelOffset = $<HTMLInputElement>("bevel-offset");

function sendBevel(): void {
  send({
    cmd: "set_bevel",
    payload: {
      offset_mm: parseFloat(bevelOffset.value),
      direction: bevelDir.checked ? 1 : -1,
    },
  });
}

bevelDir.addEventListener("change", sendBevel);
bevelOffset.addEventListener("change", sendBevel);

$("export").addEventListener("click", () => {
  const text = commandLogToScript(model.commandLog);
  const blob = new Blob([text], { type: "application/toml" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "session-script.toml";
  a.click();
  URL.revokeObjectURL(a.href);
});

$("new-session").addEventListener("click", () => {
  void openSession(($("preset") as HTMLSelectElement).value);
});

// --- canvas pan / zoom ------------------------------------------------------

let dragging: [number, number] | null = null;
canvas.addEventListener("mousedown", (e) => {
  dragging = [e.offsetX, e.offsetY];
});
window.addEventListener("mouseup", () => {
  dragging = null;
});
canvas.addEventListener("mousemove", (e) => {
  if (dragging && viewport) {
    viewport = pan(viewport, e.offsetX - dragging[0], e.offsetY - dragging[1]);
    dragging = [e.offsetX, e.offsetY];
    requestFrame();
  }
});
canvas.addEventListener("wheel", (e) => {
  if (!viewport) return;
  e.preventDefault();
  const factor = e.deltaY < 0 ? 1.15 : 1 / 1.15;
  viewport = zoomAt(viewport, factor, e.offsetX, e.offsetY);
  requestFrame();
});

// --- boot -------------------------------------------------------------------

async function boot(): Promise<void> {
  const resp = await fetch("/scenarios");
  const presets: string[] = (await resp.json()).presets;
  const select = $("preset") as HTMLSelectElement;
  for (const p of presets) {
    const opt = document.createElement("option");
    opt.value = p;
    opt.textContent = p;
    select.appendChild(opt);
  }
  await openSession(presets[0]);
}

void boot();
