/** Browser entry point: wires the API client, the SVG session view, and the
 * policy dialog together. All optimization math happens service-side; this
 * file only moves JSON around and redraws.
 */

import { SessionApi, subscribeSession } from "./api.js";
import type { Subscription, WireEvent } from "./api.js";
import { sessionConfigTemplate } from "./config.js";
import { renderSession } from "./render.js";
import { nextDialog, OPTION_KEYS, OPTION_LABELS } from "./policyDialog.js";
import type { OptionKey, PolicyDialogModel } from "./policyDialog.js";
import { parseSnapshot } from "./types.js";
import type { SessionSnapshot } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function escHtml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/// Latest snapshot plus purely local view state; nothing here round-trips
/// to the service.
interface SessionViewModel {
  snapshot: SessionSnapshot | null;
  showHigh: boolean;
  showLow: boolean;
  zoom: [number, number] | null;
  dialog: PolicyDialogModel | null;
}

class App {
  api = new SessionApi("");
  sessionId: string | null = null;
  view: SessionViewModel = {
    snapshot: null,
    showHigh: true,
    showLow: true,
    zoom: null,
    dialog: null,
  };
  subscription: Subscription | null = null;
  advancing = false;

  async start(): Promise<void> {
    el<HTMLTextAreaElement>("config-input").value = JSON.stringify(
      sessionConfigTemplate(),
      null,
      2,
    );
    el("create-btn").addEventListener("click", () => void this.createSession());
    el("advance-btn").addEventListener("click", () => void this.advance(1));
    el("advance5-btn").addEventListener("click", () => void this.advance(5));
    el("show-high").addEventListener("change", (ev) => {
      this.view.showHigh = (ev.target as HTMLInputElement).checked;
      this.redraw();
    });
    el("show-low").addEventListener("change", (ev) => {
      this.view.showLow = (ev.target as HTMLInputElement).checked;
      this.redraw();
    });
    el("zoom-apply").addEventListener("click", () => this.applyZoom());
    el("zoom-reset").addEventListener("click", () => {
      this.view.zoom = null;
      el<HTMLInputElement>("zoom-lo").value = "";
      el<HTMLInputElement>("zoom-hi").value = "";
      this.redraw();
    });
    el("dialog").addEventListener("click", (ev) => this.onDialogClick(ev));
    el("dialog").addEventListener("change", (ev) => this.onDialogInput(ev));
    el("dialog").addEventListener("input", (ev) => this.onDialogInput(ev));

    const fromUrl = new URLSearchParams(window.location.search).get("session");
    if (fromUrl !== null) await this.attach(fromUrl);
  }

  applyZoom(): void {
    const lo = Number(el<HTMLInputElement>("zoom-lo").value);
    const hi = Number(el<HTMLInputElement>("zoom-hi").value);
    if (!Number.isFinite(lo) || !Number.isFinite(hi) || lo >= hi) {
      this.note("Zoom window needs numeric bounds with lo < hi.", true);
      return;
    }
    this.view.zoom = [lo, hi];
    this.redraw();
  }

  note(text: string, isError = false): void {
    const node = el("note");
    node.textContent = text;
    node.className = isError ? "note error" : "note";
  }

  async createSession(): Promise<void> {
    let config: Record<string, unknown>;
    try {
      config = JSON.parse(el<HTMLTextAreaElement>("config-input").value) as Record<
        string,
        unknown
      >;
    } catch (err) {
      this.note(`Config is not valid JSON: ${String(err)}`, true);
      return;
    }
    try {
      const created = await this.api.createSession(config);
      const url = new URL(window.location.href);
      url.searchParams.set("session", created.session_id);
      window.history.replaceState(null, "", url.toString());
      await this.attach(created.session_id, created.snapshot);
    } catch (err) {
      this.note(`Create failed: ${String(err)}`, true);
    }
  }

  async attach(sessionId: string, snapshot?: SessionSnapshot): Promise<void> {
    this.subscription?.close();
    this.sessionId = sessionId;
    el<HTMLAnchorElement>("export-link").href = `/sessions/${sessionId}/export`;
    el<HTMLAnchorElement>("csv-link").href = `/sessions/${sessionId}/observations.csv`;
    el("session-tools").hidden = false;
    try {
      this.applySnapshot(snapshot ?? (await this.api.getSnapshot(sessionId)));
    } catch (err) {
      this.note(`Cannot load session: ${String(err)}`, true);
      return;
    }
    this.subscription = subscribeSession(this.api, sessionId, {
      onEvent: (ev) => this.onEvent(ev),
      onError: (err) => this.note(`Event stream error: ${String(err)}`, true),
      onFallback: () => this.note("Live stream unavailable; polling instead."),
    });
  }

  onEvent(ev: WireEvent): void {
    if (ev.type === "IterationCompleted" && ev.payload.snapshot !== undefined) {
      try {
        this.applySnapshot(parseSnapshot(ev.payload.snapshot));
      } catch {
        void this.refresh();
      }
    } else {
      // PolicyPrompt / Converged / Stopped: the snapshot endpoint has the
      // authoritative view, including the pending prompt.
      void this.refresh();
    }
  }

  async refresh(): Promise<void> {
    if (this.sessionId === null) return;
    try {
      this.applySnapshot(await this.api.getSnapshot(this.sessionId));
    } catch (err) {
      this.note(`Refresh failed: ${String(err)}`, true);
    }
  }

  applySnapshot(snap: SessionSnapshot): void {
    this.view.snapshot = snap;
    this.redraw();
    this.note(`status: ${snap.status} (iteration ${snap.iteration})`);
    // An open checkpoint always surfaces the dialog, including on reload.
    this.view.dialog = nextDialog(this.view.dialog, snap);
    this.renderDialog();
  }

  redraw(): void {
    const snap = this.view.snapshot;
    if (snap === null) return;
    el("view").innerHTML = renderSession(snap, {
      showHigh: this.view.showHigh,
      showLow: this.view.showLow,
      ...(this.view.zoom !== null ? { xWindow: this.view.zoom } : {}),
    });
  }

  async advance(steps: number): Promise<void> {
    // One outstanding advance at a time; the service rejects overlap anyway.
    if (this.sessionId === null || this.advancing) return;
    this.advancing = true;
    el<HTMLButtonElement>("advance-btn").disabled = true;
    el<HTMLButtonElement>("advance5-btn").disabled = true;
    try {
      const snaps = await this.api.advance(this.sessionId, steps);
      const last = snaps[snaps.length - 1];
      if (last !== undefined) this.applySnapshot(last);
    } catch (err) {
      this.note(`Advance rejected: ${String(err)}`, true);
    } finally {
      this.advancing = false;
      el<HTMLButtonElement>("advance-btn").disabled = false;
      el<HTMLButtonElement>("advance5-btn").disabled = false;
    }
  }

  // ---- dialog wiring ----

  onDialogClick(ev: Event): void {
    const target = ev.target as HTMLElement;
    const action = target.dataset.action;
    const d = this.view.dialog;
    if (action === undefined || d === null) return;
    if (action === "answer-yes") d.answer(true);
    else if (action === "answer-no") d.answer(false);
    else if (action === "toggle") d.toggle(target.dataset.option as OptionKey);
    else if (action === "submit") {
      void this.submitDialog();
      return;
    }
    this.renderDialog();
  }

  onDialogInput(ev: Event): void {
    const target = ev.target as HTMLInputElement | HTMLSelectElement;
    const field = target.dataset.field;
    const d = this.view.dialog;
    if (field === undefined || d === null) return;
    if (field === "bound-lo" || field === "bound-hi") {
      const i = Number(target.dataset.dim);
      const pair = d.boundsText[i];
      if (pair !== undefined) pair[field === "bound-lo" ? 0 : 1] = target.value;
    } else if (field === "mean-kind") d.meanKind = target.value as typeof d.meanKind;
    else if (field === "spatial-family")
      d.spatialFamily = target.value as typeof d.spatialFamily;
    else if (field === "cost-ratio") d.costRatioText = target.value;
    else if (field === "max-iterations") d.maxIterationsText = target.value;
  }

  async submitDialog(): Promise<void> {
    if (this.view.dialog === null) return;
    const snap = await this.view.dialog.submit(this.api);
    if (snap !== null) {
      this.view.dialog = null;
      this.applySnapshot(snap);
    } else {
      this.renderDialog(); // stays open, now with inline errors
    }
  }

  renderDialog(): void {
    const host = el("dialog");
    const d = this.view.dialog;
    if (d === null || !d.open) {
      host.hidden = true;
      host.innerHTML = "";
      return;
    }
    const err = (key: string): string =>
      key in d.errors
        ? `<span class="field-error">${escHtml(d.errors[key as OptionKey] ?? "")}</span>`
        : "";
    const yes = d.continueWithChanges === true;
    const sections: string[] = [
      `<h2>Checkpoint at iteration ${d.context.iteration}</h2>`,
      `<p>${escHtml(d.context.promptMessage)}</p>`,
      `<p>Change the optimization strategy?
        <button data-action="answer-yes" class="${yes ? "on" : ""}">Yes</button>
        <button data-action="answer-no" class="${d.continueWithChanges === false ? "on" : ""}">No</button>
        ${err("answer")}</p>`,
    ];
    if (yes) {
      sections.push(`<p>What should change? ${err("options")}</p><ul>`);
      for (const key of OPTION_KEYS) {
        const on = d.selected.has(key);
        sections.push(
          `<li><label><input type="checkbox" data-action="toggle" data-option="${key}" ${on ? "checked" : ""}/> ${OPTION_LABELS[key]}</label>`,
        );
        if (on) sections.push(this.optionInputs(key));
        sections.push(`</li>`);
      }
      sections.push(`</ul>`);
    }
    if (d.continueWithChanges !== null) {
      sections.push(
        `<p><button data-action="submit" ${d.submitting ? "disabled" : ""}>Submit</button></p>`,
      );
    }
    if (d.serverError !== null) {
      sections.push(`<p class="field-error">Service rejected the batch: ${escHtml(d.serverError)}</p>`);
    }
    host.innerHTML = sections.join("\n");
    host.hidden = false;
  }

  optionInputs(key: OptionKey): string {
    const d = this.view.dialog;
    if (d === null) return "";
    const err = key in d.errors ? `<span class="field-error">${escHtml(d.errors[key] ?? "")}</span>` : "";
    if (key === "parameter_space") {
      const rows = d.boundsText
        .map(
          ([lo, hi], i) =>
            `dim ${i}: <input data-field="bound-lo" data-dim="${i}" value="${escHtml(lo)}" size="8"/>
             to <input data-field="bound-hi" data-dim="${i}" value="${escHtml(hi)}" size="8"/>`,
        )
        .join("<br/>");
      return `<div class="option-body">New bounds: ${rows} ${err}</div>`;
    }
    if (key === "surrogate") {
      const meanOpts = ["", "zero", "gaussian_peak", "piecewise_offset"]
        .map(
          (k) =>
            `<option value="${k}" ${d.meanKind === k ? "selected" : ""}>${k === "" ? "(keep mean)" : k}</option>`,
        )
        .join("");
      const famOpts = ["", "rbf", "matern52"]
        .map(
          (k) =>
            `<option value="${k}" ${d.spatialFamily === k ? "selected" : ""}>${k === "" ? "(keep kernel)" : k}</option>`,
        )
        .join("");
      return `<div class="option-body">Mean model: <select data-field="mean-kind">${meanOpts}</select>
        Kernel family: <select data-field="spatial-family">${famOpts}</select> ${err}</div>`;
    }
    if (key === "cost_ratio") {
      return `<div class="option-body">New cost ratio C:
        <input data-field="cost-ratio" value="${escHtml(d.costRatioText)}" size="8"/> ${err}</div>`;
    }
    return `<div class="option-body">New iteration budget M (must exceed k = ${d.context.iteration}):
      <input data-field="max-iterations" value="${escHtml(d.maxIterationsText)}" size="8"/> ${err}</div>`;
  }
}

const app = new App();
void app.start();
