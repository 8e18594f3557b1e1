// Wire types for the session event stream. The server numbers events from 1
// per session; the console renders strictly in seq order and drops
// duplicates so a reconnect replay is safe.
const KINDS = new Set([
    "message",
    "tool_request",
    "tool_result",
    "status",
]);
/** Decode one SSE frame into a ViewEvent; null for anything malformed. */
export function toViewEvent(id, event, data) {
    if (!id || !event || !KINDS.has(event))
        return null;
    const seq = Number(id);
    if (!Number.isInteger(seq) || seq < 1)
        return null;
    let payload;
    try {
        payload = JSON.parse(data);
    }
    catch {
        return null;
    }
    if (typeof payload !== "object" || payload === null)
        return null;
    return { seq, kind: event, payload: payload };
}
