// Transcript state reconstructed purely from the event stream. Everything
// the view shows comes from here, so a reconnect replay rebuilds the exact
// same screen.
export class TranscriptStore {
    constructor() {
        this.events = [];
        this.lastSeq = 0;
        this.status = "";
        this.statusDetail = "";
        this.approvals = new Map();
        this.approvalOrder = [];
    }
    /**
     * Apply one event; returns false when it is a duplicate (seq at or below
     * the high-water mark). The server emits per-session seq 1,2,3,... and a
     * replay starts above the requested id, so non-monotonic arrivals can only
     * be duplicates.
     */
    apply(ev) {
        if (ev.seq <= this.lastSeq)
            return false;
        this.lastSeq = ev.seq;
        this.events.push(ev);
        if (ev.kind === "tool_request") {
            const p = ev.payload;
            if (!this.approvals.has(p.approval_id)) {
                this.approvals.set(p.approval_id, {
                    approvalId: p.approval_id,
                    tool: p.tool,
                    input: p.input,
                    phase: "pending",
                });
                this.approvalOrder.push(p.approval_id);
            }
        }
        else if (ev.kind === "tool_result") {
            // results carry no approval id; the loop runs one action at a time,
            // so the oldest unsettled card is the one this result answers
            const open = this.approvalOrder
                .map((id) => this.approvals.get(id))
                .find((c) => c.phase !== "settled" && c.phase !== "already_resolved");
            if (open)
                open.phase = "settled";
        }
        else if (ev.kind === "status") {
            const p = ev.payload;
            this.status = p.status;
            this.statusDetail = p.detail ?? "";
        }
        return true;
    }
    approval(id) {
        return this.approvals.get(id);
    }
    /** The single card the UI may act on: the latest still-pending approval. */
    actionableApproval() {
        for (let i = this.approvalOrder.length - 1; i >= 0; i--) {
            const card = this.approvals.get(this.approvalOrder[i]);
            if (card.phase === "pending")
                return card;
            if (card.phase === "acting")
                return null; // a POST is in flight
        }
        return null;
    }
    markActing(id, decision) {
        const card = this.approvals.get(id);
        if (card && card.phase === "pending") {
            card.phase = "acting";
            card.decision = decision;
        }
    }
    markAlreadyResolved(id) {
        const card = this.approvals.get(id);
        if (card && card.phase !== "settled")
            card.phase = "already_resolved";
    }
    /** Result rows for rendering: tool_result events matched to their seq. */
    toolResultFor(ev) {
        return ev.payload;
    }
}
