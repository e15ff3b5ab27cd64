// WebSocket session binding with automatic reconnect and backoff.

import { FeedMessage, parseFeedMessage } from "./protocol.js";
import { ConnectionState } from "./viewmodel.js";

export interface SessionClient {
  send(text: string): boolean;
  close(): void;
}

export interface ClientHooks {
  onMessage(message: FeedMessage): void;
  onState(state: ConnectionState): void;
}

const BACKOFF_START_MS = 500;
const BACKOFF_MAX_MS = 8000;

export function connectSession(url: string, hooks: ClientHooks): SessionClient {
  let ws: WebSocket | null = null;
  let closed = false;
  let backoff = BACKOFF_START_MS;

  function open() {
    if (closed) return;
    hooks.onState("connecting");
    ws = new WebSocket(url);
    ws.onopen = () => {
      backoff = BACKOFF_START_MS;
      hooks.onState("open");
    };
    ws.onmessage = (ev) => {
      const msg = parseFeedMessage(String(ev.data));
      if (msg) hooks.onMessage(msg);
    };
    ws.onclose = () => {
      hooks.onState("closed");
      if (!closed) {
        setTimeout(open, backoff);
        backoff = Math.min(backoff * 2, BACKOFF_MAX_MS);
      }
    };
    ws.onerror = () => {
      ws?.close();
    };
  }

  open();
  return {
    send(text: string): boolean {
      if (ws && ws.readyState === WebSocket.OPEN) {
        ws.send(text);
        return true;
      }
      return false;
    },
    close() {
      closed = true;
      ws?.close();
    },
  };
}
