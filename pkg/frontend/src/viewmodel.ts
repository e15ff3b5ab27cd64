// Session view model: the single place feed messages are folded into
// renderable state. Physics is never computed here; every rendered frame
// corresponds to exactly one received snapshot (tracked by token).

import {
  Command,
  CommandRecord,
  FeedMessage,
  Snapshot,
  encodeCommand,
} from "./protocol.js";

export type ConnectionState = "connecting" | "open" | "closed";

export interface SessionModel {
  readonly snapshot: Snapshot | null;
  readonly snapshotToken: number;
  readonly connection: ConnectionState;
  readonly lastError: string | null;
  readonly droppedTotal: number;
  /** commands acknowledged by a snapshot, in application order */
  readonly commandLog: CommandRecord[];
  nextSeq(): number;
  prepare(command: Command, nowMs?: number): { seq: number; text: string };
  onMessage(message: FeedMessage, nowMs?: number): void;
  onConnection(state: ConnectionState): void;
  markRendered(token: number): void;
  renderedMatchesLatest(): boolean;
  medianLatencyMs(): number | null;
}

const LATENCY_WINDOW = 64;

export function createSessionModel(): SessionModel {
  let snapshot: Snapshot | null = null;
  let snapshotToken = 0;
  let renderedToken = 0;
  let connection: ConnectionState = "connecting";
  let lastError: string | null = null;
  let droppedTotal = 0;
  let seq = 0;
  const commandLog: CommandRecord[] = [];
  const pending = new Map<number, { record: CommandRecord; sentAt: number }>();
  const latencies: number[] = [];

  return {
    get snapshot() {
      return snapshot;
    },
    get snapshotToken() {
      return snapshotToken;
    },
    get connection() {
      return connection;
    },
    get lastError() {
      return lastError;
    },
    get droppedTotal() {
      return droppedTotal;
    },
    get commandLog() {
      return commandLog;
    },

    nextSeq() {
      return seq;
    },

    prepare(command: Command, nowMs: number = clockNow()) {
      const mySeq = seq;
      seq += 1;
      pending.set(mySeq, {
        record: {
          seq: mySeq,
          cmd: command.cmd,
          payload: command.payload as Record<string, unknown>,
        },
        sentAt: nowMs,
      });
      return { seq: mySeq, text: encodeCommand(mySeq, command) };
    },

    onMessage(message: FeedMessage, nowMs: number = clockNow()) {
      switch (message.type) {
        case "snapshot": {
          snapshot = message.snapshot;
          snapshotToken += 1;
          lastError = null;
          const entry = pending.get(message.seq);
          if (entry !== undefined) {
            pending.delete(message.seq);
            commandLog.push(entry.record);
            latencies.push(nowMs - entry.sentAt);
            if (latencies.length > LATENCY_WINDOW) latencies.shift();
          }
          break;
        }
        case "error":
          lastError = message.detail;
          if (message.expected_seq !== null && message.expected_seq !== undefined) {
            // the server never consumed these sequence numbers
            for (const k of [...pending.keys()]) {
              if (k >= message.expected_seq) pending.delete(k);
            }
            seq = message.expected_seq;
          }
          break;
        case "gap":
          droppedTotal += message.dropped;
          break;
        case "heartbeat":
          break;
      }
    },

    onConnection(state: ConnectionState) {
      connection = state;
    },

    markRendered(token: number) {
      renderedToken = token;
    },

    renderedMatchesLatest() {
      return renderedToken === snapshotToken;
    },

    medianLatencyMs() {
      if (latencies.length === 0) return null;
      const sorted = [...latencies].sort((a, b) => a - b);
      const mid = Math.floor(sorted.length / 2);
      return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
    },
  };
}

function clockNow(): number {
  return typeof performance !== "undefined" ? performance.now() : Date.now();
}
