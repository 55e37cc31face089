/**
 * Minimal in-process stand-in for the session API, used by the frontend
 * tests. It mirrors the real server's payload shapes and state machine and
 * records every request so tests can assert what the client actually sent.
 */
import { createServer } from "node:http";
const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
function diagnosisPayload(session) {
    const variant = session.diagnosisCount;
    return {
        bug_description: variant === 1
            ? "one click fans out to every listener of the caught message"
            : `one click fans out to every listener of the caught message (alternative ${variant - 1})`,
        fix_options: [
            { label: "A", text: "change count in the clicked script and drop the broadcast", has_sketch: true },
            { label: "B", text: `guard the listeners (variant ${variant})`, has_sketch: false },
        ],
        backend: "mock",
        rendered: "Bug description: ...\nFix options: A-..., B-...",
    };
}
function statusPayload(session) {
    return {
        session_id: session.id,
        state: session.state,
        scenario: "one_click_one_point",
        frames: session.frames,
        keyframes: [0, 10, 11, session.frames - 1],
        diagnosis: session.diagnosisCount > 0 ? diagnosisPayload(session) : null,
        history: session.history,
        pass_at: session.passAt,
        verdict: session.state === "Verified" ? "Pass" : session.state === "Exhausted" ? "Fail" : null,
        failed_assertions: session.state === "Verified"
            ? []
            : [{ assertion: "VarChangedBy(count, 1) @10..40", measured: 3, counterexample_tick: 11, scheduler_order: "declaration" }],
        patch_diffs: session.passAt ? [{ attempt: 1, instructions: "Step 1: Cat1 - ..." }] : [],
        symptoms: ["JumpVariable(Stage:count) ticks 10..11 severity 0.75 {}"],
    };
}
export class MockApiServer {
    requests = [];
    server;
    sessions = new Map();
    counter = 0;
    constructor() {
        this.server = createServer((req, res) => void this.route(req, res));
    }
    async start() {
        await new Promise((resolve) => this.server.listen(0, "127.0.0.1", resolve));
        const addr = this.server.address();
        return `http://127.0.0.1:${addr.port}`;
    }
    async stop() {
        await new Promise((resolve, reject) => this.server.close((err) => (err ? reject(err) : resolve())));
    }
    async route(req, res) {
        const chunks = [];
        for await (const chunk of req)
            chunks.push(chunk);
        const body = Buffer.concat(chunks).toString("utf-8");
        const path = req.url ?? "/";
        this.requests.push({ method: req.method ?? "GET", path, body });
        const json = (code, payload) => {
            const data = JSON.stringify(payload);
            res.writeHead(code, { "Content-Type": "application/json" });
            res.end(data);
        };
        if (req.method === "POST" && path === "/sessions") {
            this.counter += 1;
            const session = {
                id: `mock${this.counter}`,
                state: "Loaded",
                frames: 12,
                history: [],
                hints: [],
                diagnosisCount: 0,
                passAt: null,
            };
            this.sessions.set(session.id, session);
            json(200, { session_id: session.id, state: session.state, warnings: [] });
            return;
        }
        const match = path.match(/^\/sessions\/([^/]+)(\/.*)?$/);
        const session = match ? this.sessions.get(match[1]) : undefined;
        if (!session) {
            json(404, { detail: "unknown session" });
            return;
        }
        const sub = (match[2] ?? "").split("?")[0];
        if (req.method === "POST" && sub === "/trace") {
            if (session.state !== "Loaded")
                return json(409, { detail: `action 'trace' is not allowed in state ${session.state}` });
            session.state = "Traced";
            json(200, {
                state: session.state,
                frames: session.frames,
                keyframes: [0, 10, 11].map((t) => `/sessions/${session.id}/frames/${t}.png`),
            });
            return;
        }
        if (req.method === "GET" && /^\/frames\/\d+\.png$/.test(sub)) {
            res.writeHead(200, { "Content-Type": "image/png" });
            res.end(Buffer.concat([PNG_MAGIC, Buffer.from(sub)]));
            return;
        }
        if (req.method === "GET" && sub === "/trace.jsonl") {
            const lines = [];
            for (let t = 0; t < session.frames; t += 1) {
                lines.push(JSON.stringify({
                    kind: "frame", tick: t, sprites: [],
                    variables: { Stage: { count: t >= 11 ? 3 : 0 } },
                    active_scripts: 0, events_this_tick: [],
                }));
            }
            json(200, { start: 0, count: lines.length, total: session.frames, lines });
            return;
        }
        if (req.method === "POST" && sub === "/diagnose") {
            if (session.state !== "Traced" && session.state !== "Exhausted") {
                return json(409, { detail: `action 'diagnose' is not allowed in state ${session.state}` });
            }
            session.diagnosisCount += 1;
            session.state = "AwaitingSelection";
            json(200, { state: session.state, diagnosis: diagnosisPayload(session) });
            return;
        }
        if (req.method === "POST" && sub === "/reject") {
            if (session.state !== "AwaitingSelection") {
                return json(409, { detail: `action 'reject' is not allowed in state ${session.state}` });
            }
            const hint = JSON.parse(body || "{}").hint ?? "";
            session.hints.push(hint);
            session.history.push({
                attempt_index: session.history.length + 1,
                diagnosis: { bug_description: diagnosisPayload(session).bug_description },
                selected_fix: null, patch: null, verdict: null,
                user_hint: hint, failure_log: null,
            });
            session.diagnosisCount += 1;
            json(200, {
                state: session.state,
                diagnosis: diagnosisPayload(session),
                history_length: session.history.length,
            });
            return;
        }
        if (req.method === "POST" && sub === "/select") {
            if (session.state !== "AwaitingSelection") {
                return json(409, { detail: `action 'select' is not allowed in state ${session.state}` });
            }
            const parsed = JSON.parse(body || "{}");
            if (!["A", "B", "C"].includes(parsed.label ?? "")) {
                return json(422, { detail: "label must be A, B, or C" });
            }
            session.history.push({
                attempt_index: session.history.length + 1,
                diagnosis: null,
                selected_fix: { label: parsed.label, text: "change count in the clicked script" },
                patch: 'Step 1: Cat1 - insert change_variable(count, 1) inside when_clicked',
                verdict: "Pass", user_hint: null, failure_log: null,
            });
            session.passAt = 1;
            session.state = "Verified";
            json(200, { state: session.state, pass_at: 1, history_length: session.history.length });
            return;
        }
        if (req.method === "GET" && sub === "/status") {
            json(200, statusPayload(session));
            return;
        }
        if (req.method === "GET" && sub === "/fixed.sb3") {
            if (session.state !== "Verified") {
                return json(409, { detail: `action 'download' is not allowed in state ${session.state}` });
            }
            res.writeHead(200, { "Content-Type": "application/octet-stream" });
            res.end(Buffer.from("PKmock-fixed-archive"));
            return;
        }
        json(404, { detail: `no route for ${req.method} ${path}` });
    }
}
