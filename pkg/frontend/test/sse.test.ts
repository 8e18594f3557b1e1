import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";
import { afterEach, describe, expect, it } from "vitest";

import { toViewEvent } from "../src/events.js";
import { EventStreamClient, SseFrameParser } from "../src/sse.js";
import { TranscriptStore } from "../src/store.js";
import type { ViewEvent } from "../src/events.js";

const frame = (id: number, event: string, data: object) =>
  `id: ${id}\nevent: ${event}\ndata: ${JSON.stringify(data)}\n\n`;

describe("SseFrameParser", () => {
  it("parses a complete frame", () => {
    const parser = new SseFrameParser();
    const frames = parser.push('id: 3\nevent: message\ndata: {"a":1}\n\n');
    expect(frames).toEqual([{ id: "3", event: "message", data: '{"a":1}' }]);
  });

  it("handles frames split across arbitrary chunk boundaries", () => {
    const parser = new SseFrameParser();
    const raw = frame(1, "message", { x: 1 }) + frame(2, "status", { s: "ok" });
    const collected = [];
    for (const ch of raw) collected.push(...parser.push(ch));
    expect(collected.map((f) => f.id)).toEqual(["1", "2"]);
    expect(collected[1].event).toBe("status");
  });

  it("skips keep-alive comment lines", () => {
    const parser = new SseFrameParser();
    const frames = parser.push(": keep-alive\n\nid: 1\nevent: message\ndata: {}\n\n");
    expect(frames).toHaveLength(1);
    expect(frames[0].id).toBe("1");
  });

  it("strips carriage returns", () => {
    const parser = new SseFrameParser();
    const frames = parser.push("id: 2\r\nevent: status\r\ndata: {}\r\n\r\n");
    expect(frames).toEqual([{ id: "2", event: "status", data: "{}" }]);
  });

  it("joins multi-line data fields with newlines", () => {
    const parser = new SseFrameParser();
    const frames = parser.push("id: 1\nevent: message\ndata: a\ndata: b\n\n");
    expect(frames[0].data).toBe("a\nb");
  });

  it("buffers an incomplete frame until its blank line", () => {
    const parser = new SseFrameParser();
    expect(parser.push("id: 9\nevent: message\n")).toEqual([]);
    expect(parser.push("data: {}\n\n")).toHaveLength(1);
  });
});

describe("toViewEvent", () => {
  it("decodes a valid frame", () => {
    const ev = toViewEvent("4", "tool_result", '{"ok":true}');
    expect(ev).toEqual({ seq: 4, kind: "tool_result", payload: { ok: true } });
  });

  it.each([
    [undefined, "message", "{}"],
    ["x", "message", "{}"],
    ["0", "message", "{}"],
    ["1", "banana", "{}"],
    ["1", "message", "not json"],
    ["1", "message", '"just a string"'],
  ])("rejects malformed frame (%s, %s, %s)", (id, event, data) => {
    expect(toViewEvent(id as string | undefined, event, data)).toBeNull();
  });
});

describe("EventStreamClient", () => {
  let server: Server | null = null;

  afterEach(() => {
    server?.close();
    server = null;
  });

  const listen = (s: Server): Promise<number> =>
    new Promise((resolve) => {
      s.listen(0, "127.0.0.1", () =>
        resolve((s.address() as AddressInfo).port),
      );
    });

  it("reconnects with Last-Event-ID after a dropped connection", async () => {
    const all = [
      frame(1, "message", { role: "system", content: "s" }),
      frame(2, "message", { role: "user", content: "u" }),
      frame(3, "status", { status: "Completed" }),
    ];
    const lastIdHeaders: string[] = [];
    server = createServer((req, res) => {
      const lastId = Number(req.headers["last-event-id"] ?? "0");
      lastIdHeaders.push(String(req.headers["last-event-id"]));
      res.writeHead(200, { "Content-Type": "text/event-stream" });
      if (lastId === 0) {
        // send one event, then drop the socket mid-stream
        res.write(all[0]);
        setTimeout(() => res.destroy(), 20);
      } else {
        for (const f of all.slice(lastId)) res.write(f);
        setTimeout(() => res.end(), 50);
      }
    });
    const port = await listen(server);

    const store = new TranscriptStore();
    const reconnects: number[] = [];
    const client = new EventStreamClient(
      `http://127.0.0.1:${port}/api/sessions/s1/events`,
      {
        onEvent: (ev) => store.apply(ev),
        onReconnect: (id) => reconnects.push(id),
      },
      { retryDelayMs: 10 },
    );
    client.start();

    await new Promise<void>((resolve, reject) => {
      const deadline = Date.now() + 5000;
      const tick = () => {
        if (store.status === "Completed") return resolve();
        if (Date.now() > deadline) return reject(new Error("timed out"));
        setTimeout(tick, 10);
      };
      tick();
    });
    client.stop();
    await client.join();

    expect(store.events.map((e) => e.seq)).toEqual([1, 2, 3]);
    expect(reconnects.length).toBeGreaterThanOrEqual(1);
    expect(reconnects[0]).toBe(1);
    expect(lastIdHeaders[0]).toBe("0");
    expect(lastIdHeaders).toContain("1");
  });

  it("deduplicates replayed events across the reconnect boundary", async () => {
    // replay everything from scratch regardless of Last-Event-ID: the store
    // must still end up with each seq exactly once
    let connections = 0;
    server = createServer((_req, res) => {
      connections += 1;
      res.writeHead(200, { "Content-Type": "text/event-stream" });
      res.write(frame(1, "message", { role: "system", content: "s" }));
      res.write(frame(2, "message", { role: "user", content: "u" }));
      if (connections === 1) {
        setTimeout(() => res.destroy(), 20);
      } else {
        res.write(frame(3, "status", { status: "Completed" }));
      }
    });
    const port = await listen(server);

    const seen: ViewEvent[] = [];
    const store = new TranscriptStore();
    const client = new EventStreamClient(
      `http://127.0.0.1:${port}/events`,
      {
        onEvent: (ev) => {
          seen.push(ev);
          store.apply(ev);
        },
      },
      { retryDelayMs: 10 },
    );
    client.start();
    await new Promise<void>((resolve, reject) => {
      const deadline = Date.now() + 5000;
      const tick = () => {
        if (store.status === "Completed") return resolve();
        if (Date.now() > deadline) return reject(new Error("timed out"));
        setTimeout(tick, 10);
      };
      tick();
    });
    client.stop();
    await client.join();

    expect(seen.length).toBeGreaterThan(3); // duplicates did arrive
    expect(store.events.map((e) => e.seq)).toEqual([1, 2, 3]); // and were dropped
  });

  it("treats an HTTP error status as terminal", async () => {
    server = createServer((_req, res) => {
      res.writeHead(404, { "Content-Type": "application/json" });
      res.end('{"error": "no session nope"}');
    });
    const port = await listen(server);

    let errorText = "";
    const client = new EventStreamClient(
      `http://127.0.0.1:${port}/api/sessions/nope/events`,
      {
        onEvent: () => {
          throw new Error("no events expected");
        },
        onError: (m) => {
          errorText = m;
        },
      },
      { retryDelayMs: 10 },
    );
    client.start();
    await client.join();
    expect(errorText).toContain("404");
  });

  it("gives up after maxRetries and reports it", async () => {
    server = createServer((_req, res) => {
      res.writeHead(200, { "Content-Type": "text/event-stream" });
      res.destroy();
    });
    const port = await listen(server);

    let errorText = "";
    const client = new EventStreamClient(
      `http://127.0.0.1:${port}/events`,
      {
        onEvent: () => {},
        onError: (m) => {
          errorText = m;
        },
      },
      { retryDelayMs: 5, maxRetries: 2 },
    );
    client.start();
    await client.join();
    expect(errorText).toContain("retries exhausted");
  });
});
