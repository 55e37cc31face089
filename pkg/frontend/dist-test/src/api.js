/**
 * Typed client for the blockmend session API. Pure network layer: no DOM,
 * no state of its own beyond the base URL, so it runs under node tests
 * against a mock server exactly as it runs in the browser.
 */
export class ApiError extends Error {
    status;
    detail;
    constructor(status, detail) {
        super(`${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
    }
}
async function raiseForStatus(resp) {
    if (resp.ok)
        return resp;
    let detail = resp.statusText;
    try {
        const body = await resp.json();
        if (body && typeof body.detail === "string")
            detail = body.detail;
        else
            detail = JSON.stringify(body);
    }
    catch {
        /* non-JSON error body; keep statusText */
    }
    throw new ApiError(resp.status, detail);
}
export class ApiClient {
    base;
    fetcher;
    constructor(base = "", fetcher = fetch) {
        this.base = base;
        this.fetcher = fetcher;
    }
    url(path) {
        return this.base.replace(/\/$/, "") + path;
    }
    async createSession(project, scenario, meta) {
        const form = new FormData();
        form.append("project", project, "project.sb3");
        form.append("scenario", scenario, "scenario.json");
        if (meta)
            form.append("meta", meta, "fixture.meta.json");
        const resp = await this.fetcher(this.url("/sessions"), { method: "POST", body: form });
        return (await raiseForStatus(resp)).json();
    }
    async trace(sessionId, budget = 6) {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/trace?budget=${budget}`), { method: "POST" });
        return (await raiseForStatus(resp)).json();
    }
    frameUrl(sessionId, tick) {
        return this.url(`/sessions/${sessionId}/frames/${tick}.png`);
    }
    async frame(sessionId, tick) {
        const resp = await this.fetcher(this.frameUrl(sessionId, tick));
        return (await raiseForStatus(resp)).arrayBuffer();
    }
    async diagnose(sessionId, hint = "") {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/diagnose`), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ hint }),
        });
        return (await raiseForStatus(resp)).json();
    }
    async reject(sessionId, hint) {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/reject`), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ hint }),
        });
        return (await raiseForStatus(resp)).json();
    }
    async select(sessionId, label, k = 5) {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/select`), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ label, k }),
        });
        return (await raiseForStatus(resp)).json();
    }
    async status(sessionId) {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/status`));
        return (await raiseForStatus(resp)).json();
    }
    async tracePage(sessionId, start, count) {
        const resp = await this.fetcher(this.url(`/sessions/${sessionId}/trace.jsonl?start=${start}&count=${count}`));
        return (await raiseForStatus(resp)).json();
    }
    fixedUrl(sessionId) {
        return this.url(`/sessions/${sessionId}/fixed.sb3`);
    }
    async fixed(sessionId) {
        const resp = await this.fetcher(this.fixedUrl(sessionId));
        return (await raiseForStatus(resp)).arrayBuffer();
    }
}
