// DOM rendering and wiring. The transcript pane is rebuilt from the store
// on every change: slower than patching but impossible to desync, and the
// store is small (one session per tab).
import { EventStreamClient } from "./sse.js";
import { TranscriptStore } from "./store.js";
export class ConsoleView {
    constructor(doc, root) {
        this.doc = doc;
        this.banner = doc.createElement("div");
        this.banner.className = "banner";
        this.banner.hidden = true;
        this.statusLine = doc.createElement("div");
        this.statusLine.className = "status-line";
        this.transcript = doc.createElement("div");
        this.transcript.className = "transcript";
        root.append(this.banner, this.statusLine, this.transcript);
    }
    showBanner(text) {
        this.banner.textContent = text;
        this.banner.hidden = false;
    }
    clearBanner() {
        this.banner.hidden = true;
        this.banner.textContent = "";
    }
    render(store, callbacks) {
        this.statusLine.textContent = store.status
            ? `status: ${store.status}${store.statusDetail ? ` (${store.statusDetail})` : ""}`
            : "status: running";
        this.transcript.replaceChildren();
        const actionable = store.actionableApproval();
        for (const ev of store.events) {
            let node;
            switch (ev.kind) {
                case "message":
                    node = this.renderMessage(ev.payload);
                    break;
                case "tool_request": {
                    const p = ev.payload;
                    const card = store.approval(p.approval_id);
                    node = this.renderApproval(card ?? {
                        approvalId: p.approval_id,
                        tool: p.tool,
                        input: p.input,
                        phase: "settled",
                    }, actionable?.approvalId === p.approval_id, callbacks);
                    break;
                }
                case "tool_result":
                    node = this.renderToolResult(ev.payload);
                    break;
                case "status":
                    node = this.renderStatus(ev.payload);
                    break;
            }
            node.dataset.seq = String(ev.seq);
            this.transcript.appendChild(node);
        }
    }
    renderMessage(p) {
        const el = this.doc.createElement("div");
        el.className = `bubble role-${p.role}`;
        const who = this.doc.createElement("div");
        who.className = "who";
        who.textContent = p.role;
        const body = this.doc.createElement("pre");
        body.className = "content";
        body.textContent = p.content;
        el.append(who, body);
        return el;
    }
    renderApproval(card, actionable, callbacks) {
        const el = this.doc.createElement("div");
        el.className = `card approval phase-${card.phase}`;
        const title = this.doc.createElement("div");
        title.className = "who";
        title.textContent = `approval needed: ${card.tool}`;
        // verbatim, monospace, no interpretation: the approver must see exactly
        // what would run
        const cmd = this.doc.createElement("pre");
        cmd.className = "command";
        cmd.textContent = card.input;
        el.append(title, cmd);
        const note = this.doc.createElement("div");
        note.className = "approval-note";
        if (card.phase === "already_resolved") {
            note.textContent = "already resolved";
        }
        else if (card.phase === "settled") {
            note.textContent =
                card.decision === "approve"
                    ? "approved"
                    : card.decision === "deny"
                        ? "denied"
                        : "resolved";
        }
        else if (card.phase === "acting") {
            note.textContent = card.decision === "approve" ? "approving..." : "denying...";
        }
        const controls = this.doc.createElement("div");
        controls.className = "controls";
        for (const decision of ["approve", "deny"]) {
            const btn = this.doc.createElement("button");
            btn.type = "button";
            btn.className = `btn-${decision}`;
            btn.textContent = decision;
            btn.disabled = !actionable || card.phase !== "pending";
            btn.addEventListener("click", () => {
                // disable both buttons before the POST so a double click cannot
                // produce a second request
                for (const b of controls.querySelectorAll("button")) {
                    b.disabled = true;
                }
                callbacks.onDecision(card.approvalId, decision);
            });
            controls.appendChild(btn);
        }
        el.append(controls, note);
        return el;
    }
    renderToolResult(p) {
        const el = this.doc.createElement("div");
        el.className = `bubble tool-result ${p.ok ? "ok" : "failed"}`;
        const who = this.doc.createElement("div");
        who.className = "who";
        const exit = p.exit_code === null ? "" : ` (exit ${p.exit_code})`;
        who.textContent = `${p.tool} ${p.ok ? "succeeded" : "failed"}${exit}`;
        const body = this.doc.createElement("pre");
        body.className = "content";
        body.textContent = p.output;
        el.append(who, body);
        return el;
    }
    renderStatus(p) {
        const el = this.doc.createElement("div");
        el.className = "session-status";
        el.textContent = `[${p.status}]`;
        return el;
    }
}
/**
 * One session view: store + stream + rendering glued together. Everything
 * shown is reconstructed from events, so attach() at any point (fresh or
 * reconnect) converges to the same screen.
 */
export class ConsoleApp {
    constructor(doc, root, api, streamOptions = {}) {
        this.api = api;
        this.streamOptions = streamOptions;
        this.store = new TranscriptStore();
        this.sessionId = "";
        this.client = null;
        this.view = new ConsoleView(doc, root);
    }
    async start(mode, params) {
        const id = await this.api.createSession(mode, params);
        this.attach(id);
        return id;
    }
    /** Subscribe from the store's high-water mark (0 on a fresh store). */
    attach(sessionId) {
        this.detach();
        this.sessionId = sessionId;
        this.view.clearBanner();
        this.client = new EventStreamClient(this.api.eventsUrl(sessionId), {
            onEvent: (ev) => {
                if (this.store.apply(ev))
                    this.renderNow();
            },
            onError: (message) => this.view.showBanner(message),
            onReconnect: () => this.renderNow(),
        }, this.streamOptions);
        this.client.start(this.store.lastSeq);
    }
    detach() {
        this.client?.stop();
        this.client = null;
    }
    async joinStream() {
        await this.client?.join();
    }
    async send(text) {
        try {
            await this.api.sendMessage(this.sessionId, text);
        }
        catch (err) {
            this.view.showBanner(`send failed: ${err.message}`);
        }
    }
    async decide(approvalId, decision) {
        const card = this.store.approval(approvalId);
        if (!card || card.phase !== "pending")
            return; // double-click guard
        this.store.markActing(approvalId, decision);
        this.renderNow();
        try {
            const outcome = await this.api.resolveApproval(this.sessionId, approvalId, decision);
            if (outcome === "already_resolved") {
                this.store.markAlreadyResolved(approvalId);
            }
            else if (outcome === "not_found") {
                this.view.showBanner(`approval ${approvalId} not found`);
            }
        }
        catch (err) {
            this.view.showBanner(`approval failed: ${err.message}`);
        }
        this.renderNow();
    }
    renderNow() {
        this.view.render(this.store, {
            onDecision: (id, decision) => {
                void this.decide(id, decision);
            },
        });
    }
}
