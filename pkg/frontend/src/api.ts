/** HTTP + event-stream client for the optimization service.
 *
 * Works in the browser and in Node 20 (both provide fetch with streaming
 * bodies). The UI never computes anything itself; every number it shows
 * came out of these endpoints.
 */

import type { PolicyChangeDoc, SessionSnapshot } from "./types.js";
import { parseSnapshot } from "./types.js";

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export interface CreatedSession {
  session_id: string;
  snapshot: SessionSnapshot;
}

export type WireEventType = "IterationCompleted" | "PolicyPrompt" | "Stopped" | "Converged";

export interface WireEvent {
  seq: number;
  type: WireEventType;
  payload: Record<string, unknown>;
}

const TERMINAL_EVENTS: readonly string[] = ["Stopped", "Converged"];

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
    return JSON.stringify(body);
  } catch {
    return res.statusText || "request failed";
  }
}

export class SessionApi {
  baseUrl: string;

  /// baseUrl like "http://127.0.0.1:8601" or "" for same-origin.
  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return res;
  }

  private async requestJson(path: string, init?: RequestInit): Promise<unknown> {
    return (await this.request(path, init)).json();
  }

  async createSession(config: Record<string, unknown>): Promise<CreatedSession> {
    const doc = (await this.requestJson("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    })) as { session_id: string; snapshot: unknown };
    return { session_id: doc.session_id, snapshot: parseSnapshot(doc.snapshot) };
  }

  async getSnapshot(sessionId: string): Promise<SessionSnapshot> {
    return parseSnapshot(await this.requestJson(`/sessions/${sessionId}`));
  }

  async advance(sessionId: string, steps = 1): Promise<SessionSnapshot[]> {
    const doc = (await this.requestJson(
      `/sessions/${sessionId}/advance?steps=${steps}`,
      { method: "POST" },
    )) as { snapshots: unknown[] };
    return doc.snapshots.map(parseSnapshot);
  }

  /// Submit one policy batch; the service applies it atomically and returns
  /// the refreshed snapshot. A 422 ApiError means the batch was rejected and
  /// nothing changed.
  async submitPolicy(
    sessionId: string,
    changes: PolicyChangeDoc[],
  ): Promise<SessionSnapshot> {
    const doc = (await this.requestJson(`/sessions/${sessionId}/policy`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ changes }),
    })) as { snapshot: unknown };
    return parseSnapshot(doc.snapshot);
  }

  async exportCampaign(sessionId: string): Promise<Record<string, unknown>> {
    return (await this.requestJson(`/sessions/${sessionId}/export`)) as Record<
      string,
      unknown
    >;
  }

  async observationsCsv(sessionId: string): Promise<string> {
    return (await this.request(`/sessions/${sessionId}/observations.csv`)).text();
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/events`;
  }
}

/** Incremental parser for the service's event stream.
 *
 * Frames are "id: <seq>\nevent: <type>\ndata: <json>\n\n"; bare comment
 * lines (": keep-alive") separate frames during quiet stretches and are
 * dropped here.
 */
export async function* parseSseStream(
  stream: ReadableStream<Uint8Array>,
): AsyncGenerator<WireEvent> {
  const reader = stream.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let sep: number;
      while ((sep = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, sep);
        buffer = buffer.slice(sep + 2);
        const ev = parseFrame(frame);
        if (ev !== null) yield ev;
      }
    }
  } finally {
    reader.releaseLock();
  }
}

function parseFrame(frame: string): WireEvent | null {
  let seq = -1;
  let type = "";
  let data = "";
  for (const line of frame.split("\n")) {
    if (line.startsWith(":") || line === "") continue; // comment / keep-alive
    const colon = line.indexOf(":");
    if (colon < 0) continue;
    const field = line.slice(0, colon);
    const value = line.slice(colon + 1).replace(/^ /, "");
    if (field === "id") seq = Number(value);
    else if (field === "event") type = value;
    else if (field === "data") data = data === "" ? value : `${data}\n${value}`;
  }
  if (type === "") return null;
  let payload: Record<string, unknown> = {};
  if (data !== "") {
    try {
      payload = JSON.parse(data) as Record<string, unknown>;
    } catch {
      return null; // half a frame is worse than none
    }
  }
  return { seq, type: type as WireEventType, payload };
}

export interface SubscribeHandlers {
  onEvent: (ev: WireEvent) => void;
  onError?: (err: unknown) => void;
  /// Called once if the stream is unavailable and polling takes over.
  onFallback?: () => void;
}

export interface Subscription {
  close: () => void;
  /// Resolves when the subscription ends (terminal event, close, or error).
  done: Promise<void>;
}

export interface SubscribeOptions {
  pollIntervalMs?: number;
  /// Force the polling path (used when EventSource/streaming is unavailable).
  disableStream?: boolean;
}

/** Follow a session's events. Prefers the live stream; if the stream cannot
 * be opened, falls back to polling the snapshot endpoint and synthesizing
 * the same event types from snapshot diffs. */
export function subscribeSession(
  api: SessionApi,
  sessionId: string,
  handlers: SubscribeHandlers,
  options: SubscribeOptions = {},
): Subscription {
  const interval = options.pollIntervalMs ?? 1000;
  let closed = false;
  const controller = new AbortController();

  const run = async (): Promise<void> => {
    if (!options.disableStream) {
      try {
        const res = await fetch(api.eventsUrl(sessionId), {
          signal: controller.signal,
          headers: { accept: "text/event-stream" },
        });
        if (!res.ok || res.body === null) {
          throw new ApiError(res.status, await errorDetail(res));
        }
        for await (const ev of parseSseStream(res.body)) {
          if (closed) return;
          handlers.onEvent(ev);
          if (TERMINAL_EVENTS.includes(ev.type)) return;
        }
        return; // server closed the stream
      } catch (err) {
        if (closed) return;
        if (err instanceof ApiError && err.status === 404) {
          handlers.onError?.(err);
          return;
        }
        // Stream unavailable (proxy buffering, no streaming fetch, ...):
        // same contract, slower transport.
        handlers.onFallback?.();
      }
    }
    await pollLoop();
  };

  const pollLoop = async (): Promise<void> => {
    let seq = 0;
    let last: SessionSnapshot | null = null;
    let lastPromptIteration = -1;
    while (!closed) {
      let snap: SessionSnapshot;
      try {
        snap = await api.getSnapshot(sessionId);
      } catch (err) {
        handlers.onError?.(err);
        return;
      }
      if (closed) return;
      if (last !== null && snap.iteration > last.iteration) {
        handlers.onEvent({
          seq: seq++,
          type: "IterationCompleted",
          payload: { iteration: snap.iteration, snapshot: snap },
        });
      }
      if (
        snap.status === "awaiting_policy" &&
        snap.pending_prompt !== null &&
        snap.iteration !== lastPromptIteration
      ) {
        lastPromptIteration = snap.iteration;
        handlers.onEvent({
          seq: seq++,
          type: "PolicyPrompt",
          payload: { iteration: snap.iteration, prompt: snap.pending_prompt },
        });
      }
      if (snap.status === "converged" || snap.status === "stopped") {
        handlers.onEvent({
          seq: seq++,
          type: snap.status === "converged" ? "Converged" : "Stopped",
          payload: { iteration: snap.iteration },
        });
        return;
      }
      last = snap;
      await sleep(interval);
    }
  };

  const done = run().catch((err) => {
    if (!closed) handlers.onError?.(err);
  });

  return {
    close: () => {
      closed = true;
      controller.abort();
    },
    done: done.then(() => undefined),
  };
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
