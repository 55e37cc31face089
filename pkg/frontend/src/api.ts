/**
 * Typed client for the blockmend session API. Pure network layer: no DOM,
 * no state of its own beyond the base URL, so it runs under node tests
 * against a mock server exactly as it runs in the browser.
 */

export interface FixOptionView {
  label: string;
  text: string;
  has_sketch?: boolean;
}

export interface DiagnosisView {
  bug_description: string;
  fix_options: FixOptionView[];
  backend: string;
  rendered: string;
}

export interface HistoryEntryView {
  attempt_index: number;
  diagnosis: { bug_description: string } | null;
  selected_fix: { label: string; text: string } | null;
  patch: string | null;
  verdict: string | null;
  user_hint: string | null;
  failure_log: unknown;
}

export interface FailedAssertionView {
  assertion: string;
  measured: unknown;
  counterexample_tick: number | null;
  scheduler_order?: string;
}

export interface StatusView {
  session_id: string;
  state: string;
  scenario?: string;
  frames: number;
  keyframes: number[];
  diagnosis: DiagnosisView | null;
  history: HistoryEntryView[];
  pass_at: number | null;
  verdict: string | null;
  failed_assertions: FailedAssertionView[];
  patch_diffs: unknown[];
  symptoms?: string[];
}

export interface TracePage {
  start: number;
  count: number;
  total: number;
  lines: string[];
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

async function raiseForStatus(resp: Response): Promise<Response> {
  if (resp.ok) return resp;
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
    else detail = JSON.stringify(body);
  } catch {
    /* non-JSON error body; keep statusText */
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(private base: string = "", private fetcher: typeof fetch = fetch) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  async createSession(project: Blob, scenario: Blob, meta?: Blob): Promise<{ session_id: string; state: string; warnings: string[] }> {
    const form = new FormData();
    form.append("project", project, "project.sb3");
    form.append("scenario", scenario, "scenario.json");
    if (meta) form.append("meta", meta, "fixture.meta.json");
    const resp = await this.fetcher(this.url("/sessions"), { method: "POST", body: form });
    return (await raiseForStatus(resp)).json();
  }

  async trace(sessionId: string, budget = 6): Promise<{ state: string; frames: number; keyframes: string[] }> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/trace?budget=${budget}`), { method: "POST" });
    return (await raiseForStatus(resp)).json();
  }

  frameUrl(sessionId: string, tick: number): string {
    return this.url(`/sessions/${sessionId}/frames/${tick}.png`);
  }

  async frame(sessionId: string, tick: number): Promise<ArrayBuffer> {
    const resp = await this.fetcher(this.frameUrl(sessionId, tick));
    return (await raiseForStatus(resp)).arrayBuffer();
  }

  async diagnose(sessionId: string, hint = ""): Promise<{ state: string; diagnosis: DiagnosisView }> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/diagnose`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ hint }),
    });
    return (await raiseForStatus(resp)).json();
  }

  async reject(sessionId: string, hint: string): Promise<{ state: string; diagnosis: DiagnosisView; history_length: number }> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/reject`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ hint }),
    });
    return (await raiseForStatus(resp)).json();
  }

  async select(sessionId: string, label: string, k = 5): Promise<{ state: string; pass_at: number | null; history_length: number }> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/select`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label, k }),
    });
    return (await raiseForStatus(resp)).json();
  }

  async status(sessionId: string): Promise<StatusView> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/status`));
    return (await raiseForStatus(resp)).json();
  }

  async tracePage(sessionId: string, start: number, count: number): Promise<TracePage> {
    const resp = await this.fetcher(
      this.url(`/sessions/${sessionId}/trace.jsonl?start=${start}&count=${count}`));
    return (await raiseForStatus(resp)).json();
  }

  fixedUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/fixed.sb3`);
  }

  async fixed(sessionId: string): Promise<ArrayBuffer> {
    const resp = await this.fetcher(this.fixedUrl(sessionId));
    return (await raiseForStatus(resp)).arrayBuffer();
  }
}
