// Wire types for the session event stream. The server numbers events from 1
// per session; the console renders strictly in seq order and drops
// duplicates so a reconnect replay is safe.

export type EventKind = "message" | "tool_request" | "tool_result" | "status";

export interface MessagePayload {
  role: string;
  content: string;
}

export interface ToolRequestPayload {
  approval_id: string;
  tool: string;
  input: string;
}

export interface ToolResultPayload {
  tool: string;
  ok: boolean;
  output: string;
  exit_code: number | null;
  truncated: boolean;
}

export interface StatusPayload {
  status: string;
  detail?: string;
}

export type EventPayload =
  | MessagePayload
  | ToolRequestPayload
  | ToolResultPayload
  | StatusPayload;

export interface ViewEvent {
  seq: number;
  kind: EventKind;
  payload: EventPayload;
}

const KINDS: ReadonlySet<string> = new Set([
  "message",
  "tool_request",
  "tool_result",
  "status",
]);

/** Decode one SSE frame into a ViewEvent; null for anything malformed. */
export function toViewEvent(
  id: string | undefined,
  event: string | undefined,
  data: string,
): ViewEvent | null {
  if (!id || !event || !KINDS.has(event)) return null;
  const seq = Number(id);
  if (!Number.isInteger(seq) || seq < 1) return null;
  let payload: unknown;
  try {
    payload = JSON.parse(data);
  } catch {
    return null;
  }
  if (typeof payload !== "object" || payload === null) return null;
  return { seq, kind: event as EventKind, payload: payload as EventPayload };
}
