// Thin typed wrappers over the JSON endpoints.

export type Mode = "chat" | "configure" | "run_serial" | "run_hpc" | "ask";

export interface SessionSummary {
  session_id: string;
  mode: string;
  done: boolean;
  status: string;
  loop_count: number;
  pending_approvals: string[];
  event_count: number;
}

export type ApprovalOutcome = "resolved" | "already_resolved" | "not_found";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function readError(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    if (body.error) return body.error;
  } catch {
    // not JSON; fall through
  }
  return `HTTP ${resp.status}`;
}

export class Api {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/events`;
  }

  private async post(path: string, body: unknown): Promise<Response> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createSession(
    mode: Mode,
    params: Record<string, string>,
  ): Promise<string> {
    const resp = await this.post("/api/sessions", { mode, params });
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    const body = (await resp.json()) as { session_id: string };
    return body.session_id;
  }

  async sendMessage(sessionId: string, text: string): Promise<void> {
    const resp = await this.post(
      `/api/sessions/${encodeURIComponent(sessionId)}/messages`,
      { text },
    );
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
  }

  async resolveApproval(
    sessionId: string,
    approvalId: string,
    decision: "approve" | "deny",
  ): Promise<ApprovalOutcome> {
    const resp = await this.post(
      `/api/sessions/${encodeURIComponent(sessionId)}/approvals/${encodeURIComponent(approvalId)}`,
      { decision },
    );
    if (resp.status === 200) return "resolved";
    if (resp.status === 409) return "already_resolved";
    if (resp.status === 404) return "not_found";
    throw new ApiError(resp.status, await readError(resp));
  }

  async summary(sessionId: string): Promise<SessionSummary> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, await readError(resp));
    return (await resp.json()) as SessionSummary;
  }
}
