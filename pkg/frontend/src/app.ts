/**
 * DOM wiring for the five screens: upload, playback, diagnosis, repair,
 * done. Every state change re-renders from the latest status payload; 4xx
 * and 5xx responses surface the server's message, and a 409 leaves the view
 * unchanged with the offending control disabled for that state.
 */

import { ApiClient, ApiError, StatusView } from "./api.js";
import {
  SessionView,
  applyStatus,
  clampTick,
  counterexampleTick,
  describeFailure,
  initialView,
  screenFor,
  variableSeries,
} from "./state.js";

const POLL_MS = 500;

export class App {
  view: SessionView = initialView();
  private root: HTMLElement;
  private poller: number | null = null;

  constructor(private api: ApiClient, root: HTMLElement) {
    this.root = root;
  }

  private setError(err: unknown): void {
    this.view.lastError = err instanceof ApiError ? err.detail : String(err);
    this.render();
  }

  private async refresh(): Promise<void> {
    if (!this.view.sessionId) return;
    const status = await this.api.status(this.view.sessionId);
    this.view = applyStatus(this.view, status);
    this.render();
  }

  private startPolling(): void {
    if (this.poller !== null) return;
    this.poller = window.setInterval(async () => {
      try {
        await this.refresh();
        if (this.view.state !== "Repairing") this.stopPolling();
      } catch (err) {
        this.stopPolling();
        this.setError(err);
      }
    }, POLL_MS);
  }

  private stopPolling(): void {
    if (this.poller !== null) {
      window.clearInterval(this.poller);
      this.poller = null;
    }
  }

  // -- actions ---------------------------------------------------------------

  async upload(project: File, scenario: File, meta: File | null): Promise<void> {
    try {
      this.view.busy = true;
      this.render();
      const created = await this.api.createSession(project, scenario, meta ?? undefined);
      this.view.sessionId = created.session_id;
      const traced = await this.api.trace(created.session_id);
      this.view.frames = traced.frames;
      await this.refresh();
    } catch (err) {
      this.setError(err);
    } finally {
      this.view.busy = false;
      this.render();
    }
  }

  async diagnose(hint = ""): Promise<void> {
    if (!this.view.sessionId) return;
    try {
      await this.api.diagnose(this.view.sessionId, hint);
      await this.refresh();
    } catch (err) {
      this.setError(err);
    }
  }

  async reject(hint: string): Promise<void> {
    if (!this.view.sessionId) return;
    try {
      await this.api.reject(this.view.sessionId, hint);
      await this.refresh();
    } catch (err) {
      this.setError(err);
    }
  }

  async select(label: string): Promise<void> {
    if (!this.view.sessionId) return;
    try {
      this.view.state = "Repairing";
      this.render();
      this.startPolling();
      await this.api.select(this.view.sessionId, label);
      this.stopPolling();
      await this.refresh();
    } catch (err) {
      this.stopPolling();
      this.setError(err);
    }
  }

  scrubTo(tick: number): void {
    this.view.scrubTick = clampTick(this.view, tick);
    this.render();
  }

  // -- rendering ---------------------------------------------------------------

  render(): void {
    const screen = screenFor(this.view);
    this.root.innerHTML = "";
    if (this.view.lastError) {
      const err = el("div", "error", `server: ${this.view.lastError}`);
      this.root.appendChild(err);
    }
    const header = el("div", "header",
      `session ${this.view.sessionId ?? "-"} | state ${this.view.state}`);
    this.root.appendChild(header);
    switch (screen) {
      case "upload":
        this.renderUpload();
        break;
      case "playback":
        this.renderPlayback(true);
        break;
      case "diagnosis":
        this.renderPlayback(false);
        this.renderDiagnosis();
        break;
      case "repair":
        this.renderRepair();
        break;
      case "done":
        this.renderDone();
        break;
    }
  }

  private renderUpload(): void {
    const box = el("div", "screen upload");
    box.appendChild(el("h2", "", "Upload a project"));
    const projectPick = input("file", "project-file");
    const scenarioPick = input("file", "scenario-file");
    const metaPick = input("file", "meta-file");
    const go = button("Start session", async () => {
      const project = projectPick.files?.[0];
      const scenario = scenarioPick.files?.[0];
      if (!project || !scenario) {
        this.view.lastError = "pick both a .sb3 project and a scenario.json";
        this.render();
        return;
      }
      await this.upload(project, scenario, metaPick.files?.[0] ?? null);
    });
    go.disabled = this.view.busy;
    box.append(label("project (.sb3)", projectPick), label("scenario (.json)", scenarioPick),
      label("sidecar meta (optional)", metaPick), go);
    this.root.appendChild(box);
  }

  private renderPlayback(withNext: boolean): void {
    const box = el("div", "screen playback");
    box.appendChild(el("h2", "", "Playback"));
    if (!this.view.sessionId) return;
    const img = document.createElement("img");
    img.className = "frame";
    img.src = this.api.frameUrl(this.view.sessionId, this.view.scrubTick);
    img.alt = `frame ${this.view.scrubTick}`;
    const scrub = input("range", "scrubber") as HTMLInputElement;
    scrub.min = "0";
    scrub.max = String(Math.max(0, this.view.frames - 1));
    scrub.value = String(this.view.scrubTick);
    scrub.addEventListener("input", () => this.scrubTo(Number(scrub.value)));
    const tickLabel = el("span", "tick", `tick ${this.view.scrubTick} / ${this.view.frames - 1}`);
    box.append(img, scrub, tickLabel);
    for (const badge of this.view.status?.symptoms ?? []) {
      box.appendChild(el("span", "badge", badge));
    }
    void this.renderTimeline(box);
    if (withNext) {
      box.appendChild(button("Diagnose", () => void this.diagnose()));
    }
    this.root.appendChild(box);
  }

  private async renderTimeline(into: HTMLElement): Promise<void> {
    if (!this.view.sessionId || this.view.frames === 0) return;
    try {
      const page = await this.api.tracePage(this.view.sessionId, 0,
        Math.min(this.view.frames, 300));
      const series = variableSeries(page.lines);
      if (!series.length) return;
      const table = el("table", "timeline");
      for (const s of series) {
        const row = el("tr", "");
        row.appendChild(el("td", "varname", s.name));
        const tail = s.values.slice(-12).map((v) => (v === null ? "." : String(v)));
        row.appendChild(el("td", "values", tail.join(" ")));
        table.appendChild(row);
      }
      into.appendChild(table);
    } catch {
      /* timeline is decorative; playback stays usable without it */
    }
  }

  private renderDiagnosis(): void {
    const d = this.view.status?.diagnosis;
    const box = el("div", "screen diagnosis");
    box.appendChild(el("h2", "", "Diagnosis"));
    if (!d) {
      box.appendChild(el("p", "", "no diagnosis yet"));
      this.root.appendChild(box);
      return;
    }
    box.appendChild(el("p", "bug", d.bug_description));
    for (const option of d.fix_options) {
      const card = el("div", "option-card");
      card.appendChild(el("b", "", `${option.label}`));
      card.appendChild(el("span", "", ` ${option.text} `));
      card.appendChild(button("Apply this fix", () => void this.select(option.label)));
      box.appendChild(card);
    }
    const hintBox = input("text", "hint") as HTMLInputElement;
    hintBox.placeholder = "what looks wrong instead?";
    const rejectBtn = button("Not it - add a hint", () => void this.reject(hintBox.value));
    box.append(label("hint", hintBox), rejectBtn);
    const historyPanel = el("div", "history");
    for (const entry of this.view.status?.history ?? []) {
      const bits = [
        `#${entry.attempt_index}`,
        entry.diagnosis ? `diagnosed: ${entry.diagnosis.bug_description}` : "",
        entry.user_hint ? `hint: ${entry.user_hint}` : "",
        entry.verdict ?? "",
      ].filter(Boolean);
      historyPanel.appendChild(el("div", "history-entry", bits.join(" | ")));
    }
    box.appendChild(historyPanel);
    this.root.appendChild(box);
  }

  private renderRepair(): void {
    const box = el("div", "screen repair");
    box.appendChild(el("h2", "", "Repair attempts"));
    const status = this.view.status;
    if (status) {
      for (const entry of status.history) {
        if (!entry.selected_fix && !entry.patch) continue;
        const line = el("div", "attempt",
          `attempt ${entry.attempt_index}: ${entry.verdict ?? "error"}`);
        if (entry.patch) line.appendChild(el("pre", "patch", entry.patch));
        box.appendChild(line);
      }
      if (status.pass_at) {
        box.appendChild(el("p", "", `pass@${status.pass_at}`));
      }
      for (const failed of status.failed_assertions) {
        const row = el("div", "failed", describeFailure(failed));
        const tick = failed.counterexample_tick;
        if (tick !== null && this.view.sessionId) {
          row.appendChild(button(`view tick ${tick}`, () => {
            this.view.scrubTick = tick;
            this.view.state = "Traced"; // deep-link back into playback
            this.render();
          }));
        }
        box.appendChild(row);
      }
      if (this.view.state === "Exhausted") {
        box.appendChild(button("Re-diagnose", () => void this.diagnose()));
      }
    }
    this.root.appendChild(box);
  }

  private renderDone(): void {
    const box = el("div", "screen done");
    box.appendChild(el("h2", "", "Repaired"));
    const status = this.view.status;
    if (status?.pass_at) box.appendChild(el("p", "", `verified at attempt ${status.pass_at}`));
    if (this.view.sessionId) {
      const a = document.createElement("a");
      a.href = this.api.fixedUrl(this.view.sessionId);
      a.textContent = "Download fixed.sb3";
      a.className = "download";
      box.appendChild(a);
    }
    for (const diff of status?.patch_diffs ?? []) {
      box.appendChild(el("pre", "diff", JSON.stringify(diff, null, 2)));
    }
    this.root.appendChild(box);
  }
}

// -- tiny DOM helpers -----------------------------------------------------------

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function input(type: string, className: string): HTMLInputElement {
  const node = document.createElement("input");
  node.type = type;
  node.className = className;
  return node;
}

function label(text: string, control: HTMLElement): HTMLElement {
  const wrap = el("label", "field", text + " ");
  wrap.appendChild(control);
  return wrap;
}

function button(text: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.textContent = text;
  node.addEventListener("click", onClick);
  return node;
}
