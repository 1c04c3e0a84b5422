/** Server-sent-events plumbing for the /v1/stream endpoint.
 *
 * The console keeps exactly one stream subscription. `SseParser` turns
 * raw text chunks into frames regardless of how the network sliced
 * them; `StreamClient` owns the connection, reconnects with backoff,
 * and resumes from the last global sequence number it saw so no entry
 * is lost or duplicated across drops.
 */

import type { EventEntry } from "./types.js";
import type { FetchLike } from "./api.js";

export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

/** Incremental parser: feed it text as it arrives, get whole frames back. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const normalized = this.buffer.replace(/\r\n/g, "\n");
      const split = normalized.indexOf("\n\n");
      if (split < 0) break;
      const block = normalized.slice(0, split);
      this.buffer = normalized.slice(split + 2);
      const frame = parseBlock(block);
      if (frame !== null) frames.push(frame);
    }
    return frames;
  }
}

function parseBlock(block: string): SseFrame | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line === "" || line.startsWith(":")) continue; // comment / keep-alive
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "id") {
      const n = Number.parseInt(value, 10);
      if (!Number.isNaN(n)) id = n;
    } else if (field === "event") {
      event = value;
    } else if (field === "data") {
      data.push(value);
    }
  }
  if (id === null && data.length === 0) return null; // pure comment block
  return { id, event, data: data.join("\n") };
}

export type StreamStatus = "connecting" | "open" | "retrying" | "stopped";

export interface StreamClientOptions {
  /** Build the URL to (re)connect to, given the resume point. */
  url: (after: number) => string;
  onEntry: (entry: EventEntry) => void;
  onStatus?: (status: StreamStatus) => void;
  fetchImpl?: FetchLike;
  retryBaseMs?: number;
  retryMaxMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

export class StreamClient {
  private lastSeq = 0;
  private stopped = false;
  private controller: AbortController | null = null;
  private readonly fetchImpl: FetchLike;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly retryBaseMs: number;
  private readonly retryMaxMs: number;

  constructor(private readonly options: StreamClientOptions) {
    this.fetchImpl =
      options.fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
    this.sleep =
      options.sleep ?? ((ms) => new Promise((r) => setTimeout(r, ms)));
    this.retryBaseMs = options.retryBaseMs ?? 500;
    this.retryMaxMs = options.retryMaxMs ?? 8000;
  }

  get resumeFrom(): number {
    return this.lastSeq;
  }

  /** Connect and keep following; resolves only once stop() is called. */
  async run(after = 0): Promise<void> {
    this.lastSeq = after;
    let retryMs = this.retryBaseMs;
    while (!this.stopped) {
      this.setStatus("connecting");
      try {
        const gotFrame = await this.followOnce();
        if (gotFrame) retryMs = this.retryBaseMs;
      } catch {
        // fall through to the retry delay
      }
      if (this.stopped) break;
      this.setStatus("retrying");
      await this.sleep(retryMs);
      retryMs = Math.min(retryMs * 2, this.retryMaxMs);
    }
    this.setStatus("stopped");
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async followOnce(): Promise<boolean> {
    this.controller = new AbortController();
    const response = await this.fetchImpl(this.options.url(this.lastSeq), {
      signal: this.controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!response.ok || response.body === null) {
      throw new Error(`stream rejected: HTTP ${response.status}`);
    }
    this.setStatus("open");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    let gotFrame = false;
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
          gotFrame = true;
          this.handleFrame(frame);
        }
      }
    } finally {
      reader.releaseLock();
    }
    return gotFrame;
  }

  private handleFrame(frame: SseFrame): void {
    if (frame.data === "") {
      if (frame.id !== null) this.lastSeq = frame.id;
      return;
    }
    let entry: EventEntry;
    try {
      entry = JSON.parse(frame.data) as EventEntry;
    } catch {
      return; // not ours to crash on; skip the malformed frame
    }
    this.lastSeq = frame.id ?? entry.global_seq;
    this.options.onEntry(entry);
  }

  private setStatus(status: StreamStatus): void {
    this.options.onStatus?.(status);
  }
}
