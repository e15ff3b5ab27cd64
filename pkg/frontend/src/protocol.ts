// Wire protocol shared with the session service: millimetres on the wire,
// radians for angles. Commands carry a strictly increasing sequence number.

export interface TipPose {
  x_mm: number;
  y_mm: number;
  theta_rad: number;
}

export interface ConstraintPoint {
  x_mm: number;
  y_mm: number;
  station_mm: number;
  ordinate_mm: number;
  layer: number;
  creation_depth_mm: number;
}

export interface LayerBand {
  index: number;
  mu_pa: number;
  alpha: number;
  gamma: number;
  thickness_mm: number;
  entry_mm: number[][];
}

export interface Convergence {
  iterations: number;
  residual_m: number;
  converged: boolean;
  clamp_events: number;
}

export interface Snapshot {
  step: number;
  contact: boolean;
  depth_mm: number;
  tip: TipPose;
  needle_mm: number[][];
  constraints: ConstraintPoint[];
  layers: LayerBand[];
  exit_mm: number[][] | null;
  template_x_mm: number | null;
  convergence: Convergence;
  inputs: unknown;
}

export interface SnapshotMessage {
  type: "snapshot";
  seq: number;
  step: number;
  snapshot: Snapshot;
}

export interface ErrorMessage {
  type: "error";
  detail: string;
  expected_seq: number | null;
}

export interface GapMessage {
  type: "gap";
  dropped: number;
}

export interface HeartbeatMessage {
  type: "heartbeat";
  step: number;
}

export type FeedMessage =
  | SnapshotMessage
  | ErrorMessage
  | GapMessage
  | HeartbeatMessage;

export function parseFeedMessage(text: string): FeedMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const m = raw as Record<string, unknown>;
  switch (m.type) {
    case "snapshot":
      if (typeof m.seq === "number" && typeof m.snapshot === "object" && m.snapshot) {
        return m as unknown as SnapshotMessage;
      }
      return null;
    case "error":
      return typeof m.detail === "string" ? (m as unknown as ErrorMessage) : null;
    case "gap":
      return typeof m.dropped === "number" ? (m as unknown as GapMessage) : null;
    case "heartbeat":
      return typeof m.step === "number" ? (m as unknown as HeartbeatMessage) : null;
    default:
      return null;
  }
}

export type Command =
  | { cmd: "advance"; payload: { dh_mm: number } }
  | { cmd: "retract"; payload: { dh_mm: number } }
  | {
      cmd: "set_v_input";
      payload: { at: string | number; deflection_mm?: number | null; slope_rad?: number | null };
    }
  | { cmd: "set_bevel"; payload: { offset_mm: number; direction: number } }
  | { cmd: "reset"; payload: Record<string, never> }
  | { cmd: "get_state"; payload: Record<string, never> }
  | { cmd: "load_scenario"; payload: { preset?: string; scenario?: string } };

export interface CommandRecord {
  seq: number;
  cmd: Command["cmd"];
  payload: Record<string, unknown>;
}

export function encodeCommand(seq: number, command: Command): string {
  return JSON.stringify({ seq, cmd: command.cmd, payload: command.payload });
}

// Renders the stepping commands of a session log as a batch-runner script,
// so a recorded interactive session can be replayed offline.
export function commandLogToScript(log: CommandRecord[]): string {
  const blocks: string[] = [];
  for (const rec of log) {
    if (rec.cmd === "advance" || rec.cmd === "retract") {
      const dh = rec.payload.dh_mm as number;
      const signed = rec.cmd === "retract" ? -dh : dh;
      blocks.push(`[[script]]\nadvance = "${signed} mm"`);
    } else if (rec.cmd === "set_v_input") {
      const at = rec.payload.at;
      const lines = ["[[script]]", "", "  [[script.v]]"];
      lines.push(typeof at === "string" ? `  at = "${at}"` : `  at = ${at}`);
      const defl = rec.payload.deflection_mm;
      const slope = rec.payload.slope_rad;
      if (defl !== undefined && defl !== null) {
        lines.push(`  deflection = "${defl} mm"`);
      }
      if (slope !== undefined && slope !== null) {
        lines.push(`  slope = "${slope} rad"`);
      }
      blocks.push(lines.join("\n"));
    }
    // non-stepping commands do not appear in an offline script
  }
  return blocks.join("\n\n") + (blocks.length ? "\n" : "");
}
