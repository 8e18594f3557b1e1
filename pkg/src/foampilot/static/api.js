// Thin typed wrappers over the JSON endpoints.
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function readError(resp) {
    try {
        const body = (await resp.json());
        if (body.error)
            return body.error;
    }
    catch {
        // not JSON; fall through
    }
    return `HTTP ${resp.status}`;
}
export class Api {
    constructor(baseUrl, fetchImpl = fetch) {
        this.baseUrl = baseUrl;
        this.fetchImpl = fetchImpl;
    }
    eventsUrl(sessionId) {
        return `${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}/events`;
    }
    async post(path, body) {
        return this.fetchImpl(`${this.baseUrl}${path}`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
    }
    async createSession(mode, params) {
        const resp = await this.post("/api/sessions", { mode, params });
        if (!resp.ok)
            throw new ApiError(resp.status, await readError(resp));
        const body = (await resp.json());
        return body.session_id;
    }
    async sendMessage(sessionId, text) {
        const resp = await this.post(`/api/sessions/${encodeURIComponent(sessionId)}/messages`, { text });
        if (!resp.ok)
            throw new ApiError(resp.status, await readError(resp));
    }
    async resolveApproval(sessionId, approvalId, decision) {
        const resp = await this.post(`/api/sessions/${encodeURIComponent(sessionId)}/approvals/${encodeURIComponent(approvalId)}`, { decision });
        if (resp.status === 200)
            return "resolved";
        if (resp.status === 409)
            return "already_resolved";
        if (resp.status === 404)
            return "not_found";
        throw new ApiError(resp.status, await readError(resp));
    }
    async summary(sessionId) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/sessions/${encodeURIComponent(sessionId)}`);
        if (!resp.ok)
            throw new ApiError(resp.status, await readError(resp));
        return (await resp.json());
    }
}
