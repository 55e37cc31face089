/**
 * Network-layer tests for the client against the mock API server: the full
 * upload -> playback -> reject(hint) -> diagnose -> select -> verdict ->
 * download loop, plus hint passthrough and counterexample deep-linking.
 */
import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { ApiClient, ApiError } from "../src/api.js";
import { applyStatus, clampTick, counterexampleTick, initialView, screenFor, variableSeries, } from "../src/state.js";
import { MockApiServer } from "./mock_server.js";
let server;
let base;
before(async () => {
    server = new MockApiServer();
    base = await server.start();
});
after(async () => {
    await server.stop();
});
function client() {
    return new ApiClient(base);
}
function blobs() {
    return {
        project: new Blob([new Uint8Array([0x50, 0x4b, 3, 4])]),
        scenario: new Blob([JSON.stringify({ name: "s", events: [], assertions: [] })]),
    };
}
test("full loop: upload, trace, reject with hint, select, download", async () => {
    const api = client();
    const { project, scenario } = blobs();
    const created = await api.createSession(project, scenario);
    assert.equal(created.state, "Loaded");
    const traced = await api.trace(created.session_id);
    assert.equal(traced.state, "Traced");
    assert.ok(traced.frames > 0);
    assert.match(traced.keyframes[0], /\/frames\/\d+\.png$/);
    // playback: frame bytes are PNG
    const frame = await api.frame(created.session_id, 0);
    assert.deepEqual([...new Uint8Array(frame).slice(0, 4)], [0x89, 0x50, 0x4e, 0x47]);
    const first = await api.diagnose(created.session_id);
    assert.equal(first.state, "AwaitingSelection");
    assert.equal(first.diagnosis.fix_options[0].label, "A");
    const rejected = await api.reject(created.session_id, "the count jumps by three");
    assert.equal(rejected.history_length, 1);
    assert.notEqual(rejected.diagnosis.bug_description, first.diagnosis.bug_description);
    // the hint travels verbatim in the re-diagnosis request
    const rejectRequests = server.requests.filter((r) => r.path.endsWith("/reject"));
    assert.equal(rejectRequests.length, 1);
    assert.equal(JSON.parse(rejectRequests[0].body).hint, "the count jumps by three");
    const selected = await api.select(created.session_id, "A");
    assert.equal(selected.state, "Verified");
    assert.equal(selected.pass_at, 1);
    assert.equal(selected.history_length, 2);
    const status = await api.status(created.session_id);
    assert.equal(status.verdict, "Pass");
    const hints = status.history
        .map((entry) => entry.user_hint)
        .filter((hint) => hint !== null);
    assert.deepEqual(hints, ["the count jumps by three"]);
    const fixed = await api.fixed(created.session_id);
    assert.deepEqual([...new Uint8Array(fixed).slice(0, 2)], [0x50, 0x4b]);
});
test("counterexample tick deep-links to the matching frame image", async () => {
    const api = client();
    const { project, scenario } = blobs();
    const created = await api.createSession(project, scenario);
    await api.trace(created.session_id);
    const status = await api.status(created.session_id);
    const tick = counterexampleTick(status);
    assert.equal(tick, 11);
    const url = api.frameUrl(created.session_id, tick);
    assert.ok(url.endsWith(`/sessions/${created.session_id}/frames/11.png`));
    const resp = await fetch(url);
    assert.equal(resp.status, 200);
    assert.equal(resp.headers.get("content-type"), "image/png");
});
test("illegal transitions surface as 409 ApiError with the server detail", async () => {
    const api = client();
    const { project, scenario } = blobs();
    const created = await api.createSession(project, scenario);
    // select before diagnose
    await assert.rejects(api.select(created.session_id, "A"), (err) => err instanceof ApiError && err.status === 409
        && /not allowed in state Loaded/.test(err.detail));
    // download before verified
    await assert.rejects(api.fixed(created.session_id), (err) => err instanceof ApiError && err.status === 409);
});
test("unknown session is a 404", async () => {
    const api = client();
    await assert.rejects(api.status("nope"), (err) => err instanceof ApiError && err.status === 404);
});
test("three rejections leave three history entries", async () => {
    const api = client();
    const { project, scenario } = blobs();
    const created = await api.createSession(project, scenario);
    await api.trace(created.session_id);
    await api.diagnose(created.session_id);
    for (const hint of ["first clue", "second clue", "third clue"]) {
        await api.reject(created.session_id, hint);
    }
    const status = await api.status(created.session_id);
    const entries = status.history.filter((entry) => entry.user_hint !== null);
    assert.equal(entries.length, 3);
});
test("view state derives screens from server state only", () => {
    let view = initialView();
    assert.equal(screenFor(view), "upload");
    view = applyStatus(view, {
        session_id: "s1", state: "Traced", frames: 12, keyframes: [0, 11],
        diagnosis: null, history: [], pass_at: null, verdict: null,
        failed_assertions: [], patch_diffs: [],
    });
    assert.equal(screenFor(view), "playback");
    view = { ...view, state: "AwaitingSelection" };
    assert.equal(screenFor(view), "diagnosis");
    view = { ...view, state: "Repairing" };
    assert.equal(screenFor(view), "repair");
    view = { ...view, state: "Verified" };
    assert.equal(screenFor(view), "done");
    assert.equal(clampTick(view, 99), 11);
    assert.equal(clampTick(view, -5), 0);
});
test("variable timeline parses numeric series from trace lines", async () => {
    const api = client();
    const { project, scenario } = blobs();
    const created = await api.createSession(project, scenario);
    await api.trace(created.session_id);
    const page = await api.tracePage(created.session_id, 0, 12);
    const series = variableSeries(page.lines);
    const count = series.find((s) => s.name === "Stage:count");
    assert.ok(count);
    assert.equal(count.values[0], 0);
    assert.equal(count.values[11], 3);
});
