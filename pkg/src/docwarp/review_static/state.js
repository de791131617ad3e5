/** Pure review-session state: the candidate list, a cursor over pending
 * items and verdict bookkeeping. All mutations happen only after the
 * server confirmed them (the DOM layer calls recordVerdict on 200). */
export class ReviewQueue {
    constructor(candidates) {
        this.cursor = null;
        this.candidates = [...candidates].sort((a, b) => a.id - b.id);
        this.cursor = this.firstPendingId();
    }
    all() {
        return this.candidates;
    }
    pending() {
        return this.candidates.filter((c) => c.verdict === "pending");
    }
    counts() {
        const counts = { pending: 0, accepted: 0, rejected: 0 };
        for (const c of this.candidates)
            counts[c.verdict] += 1;
        return counts;
    }
    byId(id) {
        return this.candidates.find((c) => c.id === id);
    }
    current() {
        if (this.cursor === null)
            return null;
        return this.byId(this.cursor) ?? null;
    }
    select(id) {
        if (this.byId(id))
            this.cursor = id;
    }
    firstPendingId() {
        const p = this.pending();
        return p.length ? p[0].id : null;
    }
    /** Move the cursor to the next/previous pending candidate (wraps). */
    advance(direction = 1) {
        const p = this.pending();
        if (!p.length) {
            this.cursor = null;
            return null;
        }
        if (this.cursor === null) {
            this.cursor = p[0].id;
            return this.current();
        }
        const ids = p.map((c) => c.id);
        // position of the first pending at or after the cursor
        let idx = ids.findIndex((id) => id >= this.cursor);
        if (idx === -1)
            idx = 0;
        if (ids[idx] === this.cursor) {
            idx = (idx + direction + ids.length) % ids.length;
        }
        else if (direction === -1) {
            idx = (idx - 1 + ids.length) % ids.length;
        }
        this.cursor = ids[idx];
        return this.current();
    }
    /** Apply a server-confirmed verdict; advances off the candidate if it was
     * current. Returns the next pending candidate (null when queue drained). */
    recordVerdict(id, decision) {
        const c = this.byId(id);
        if (!c)
            return this.current();
        const wasCurrent = this.cursor === id;
        c.verdict = decision;
        if (wasCurrent) {
            const p = this.pending();
            if (!p.length) {
                this.cursor = null;
                return null;
            }
            const after = p.find((cand) => cand.id > id);
            this.cursor = (after ?? p[0]).id;
        }
        return this.current();
    }
    isDone() {
        return this.pending().length === 0;
    }
}
