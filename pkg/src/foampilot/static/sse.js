// Hand-rolled SSE client on fetch + ReadableStream instead of EventSource:
// it works identically in the browser and under Node for tests, and it lets
// a resumed connection send Last-Event-ID explicitly.
import { toViewEvent } from "./events.js";
/** Incremental parser for a text/event-stream byte feed. */
export class SseFrameParser {
    constructor() {
        this.buffer = "";
        this.dataLines = [];
    }
    /** Feed one chunk; returns every frame completed by it. */
    push(chunk) {
        this.buffer += chunk;
        const frames = [];
        for (;;) {
            const nl = this.buffer.indexOf("\n");
            if (nl < 0)
                break;
            let line = this.buffer.slice(0, nl);
            this.buffer = this.buffer.slice(nl + 1);
            if (line.endsWith("\r"))
                line = line.slice(0, -1);
            if (line === "") {
                if (this.dataLines.length > 0 || this.id || this.event) {
                    frames.push({
                        id: this.id,
                        event: this.event,
                        data: this.dataLines.join("\n"),
                    });
                }
                this.id = undefined;
                this.event = undefined;
                this.dataLines = [];
                continue;
            }
            if (line.startsWith(":"))
                continue; // keep-alive comment
            const colon = line.indexOf(":");
            const field = colon < 0 ? line : line.slice(0, colon);
            let value = colon < 0 ? "" : line.slice(colon + 1);
            if (value.startsWith(" "))
                value = value.slice(1);
            if (field === "id")
                this.id = value;
            else if (field === "event")
                this.event = value;
            else if (field === "data")
                this.dataLines.push(value);
        }
        return frames;
    }
}
const sleep = (ms) => new Promise((r) => setTimeout(r, ms));
/**
 * Subscribes to a session's event stream and keeps it alive: a dropped
 * connection is reopened with Last-Event-ID so the server replays only
 * what was missed. Duplicate delivery is still possible across the
 * reconnect boundary; the store deduplicates by seq.
 */
export class EventStreamClient {
    constructor(url, handlers, options = {}) {
        this.url = url;
        this.handlers = handlers;
        this.lastEventId = 0;
        this.stopped = false;
        this.controller = null;
        this.runLoop = null;
        this.fetchImpl = options.fetchImpl ?? fetch;
        this.retryDelayMs = options.retryDelayMs ?? 500;
        this.maxRetries = options.maxRetries ?? Infinity;
    }
    start(fromSeq = 0) {
        if (this.runLoop)
            return;
        this.lastEventId = fromSeq;
        this.stopped = false;
        this.runLoop = this.loop();
    }
    stop() {
        this.stopped = true;
        this.controller?.abort();
    }
    /** Resolves when the read loop has fully wound down (test hook). */
    async join() {
        await this.runLoop;
    }
    async loop() {
        let retries = 0;
        while (!this.stopped) {
            this.controller = new AbortController();
            try {
                const sep = this.url.includes("?") ? "&" : "?";
                const resp = await this.fetchImpl(`${this.url}${sep}last_event_id=${this.lastEventId}`, {
                    headers: {
                        Accept: "text/event-stream",
                        "Last-Event-ID": String(this.lastEventId),
                    },
                    signal: this.controller.signal,
                });
                if (!resp.ok) {
                    this.handlers.onError?.(`event stream failed: HTTP ${resp.status}`);
                    return;
                }
                if (!resp.body) {
                    this.handlers.onError?.("event stream has no body");
                    return;
                }
                retries = 0;
                await this.consume(resp.body);
            }
            catch {
                if (this.stopped)
                    return;
            }
            if (this.stopped)
                return;
            // server closed the connection (or it dropped): resume from lastEventId
            retries += 1;
            if (retries > this.maxRetries) {
                this.handlers.onError?.("event stream lost: retries exhausted");
                return;
            }
            await sleep(this.retryDelayMs);
            if (this.stopped)
                return;
            this.handlers.onReconnect?.(this.lastEventId);
        }
    }
    async consume(body) {
        const reader = body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseFrameParser();
        for (;;) {
            const { done, value } = await reader.read();
            if (done)
                return;
            for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
                const ev = toViewEvent(frame.id, frame.event, frame.data);
                if (ev) {
                    if (ev.seq > this.lastEventId)
                        this.lastEventId = ev.seq;
                    this.handlers.onEvent(ev);
                }
            }
        }
    }
}
