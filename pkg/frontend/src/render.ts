/** Session view renderer: snapshot JSON in, one SVG string out.
 *
 * Pure and deterministic (no clock, no randomness, fixed number formatting),
 * so a recorded snapshot always renders to the same bytes. The document is
 * validated up front; a malformed payload yields a standalone error panel
 * and nothing else.
 */

import type { SessionSnapshot } from "./types.js";
import { parseSnapshot, SnapshotFormatError } from "./types.js";

export const COLOR_HIGH = "#f0b400"; // yellow: high-fidelity
export const COLOR_LOW = "#111111"; // black: low-fidelity

export interface RenderOptions {
  width?: number;
  height?: number;
  /// Zoom window on x; curves and markers outside it are clipped.
  xWindow?: [number, number];
  /// Fidelity overlay toggles; both default to visible.
  showHigh?: boolean;
  showLow?: boolean;
}

const W = 880;
const H = 600;
const MARGIN = { left: 58, right: 16, top: 64, bottom: 30 };
const ACQ_FRACTION = 0.28; // acquisition subplot share of the plotting column
const GAP = 34;

interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/// Fixed-point path coordinate; keeps the SVG stable across runs.
function px(v: number): string {
  const r = v.toFixed(2);
  return r === "-0.00" ? "0.00" : r;
}

/// Human-facing value label.
export function fmtValue(v: number): string {
  if (!Number.isFinite(v)) return String(v);
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 10000 || a < 0.001) return v.toExponential(2);
  const s = v.toPrecision(4);
  return s.includes(".") ? s.replace(/\.?0+$/, "") : s;
}

interface Scale {
  (v: number): number;
  lo: number;
  hi: number;
}

function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const span = hi - lo;
  const f = (v: number): number =>
    span === 0 ? (outLo + outHi) / 2 : outLo + ((v - lo) / span) * (outHi - outLo);
  const scale = f as Scale;
  scale.lo = lo;
  scale.hi = hi;
  return scale;
}

function niceRange(values: number[]): [number, number] {
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) return [0, 1];
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.06 * (hi - lo);
  return [lo - pad, hi + pad];
}

function ticks(lo: number, hi: number, n: number): number[] {
  const out: number[] = [];
  for (let i = 0; i <= n; i++) out.push(lo + ((hi - lo) * i) / n);
  return out;
}

function polyline(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  attrs: string,
): string {
  const pts = xs.map((x, i) => `${px(sx(x))},${px(sy(ys[i] as number))}`).join(" ");
  return `<polyline ${attrs} fill="none" points="${pts}"/>`;
}

/// mu +/- 2 sigma band as a closed polygon.
function band(
  xs: number[],
  mu: number[],
  variance: number[],
  sx: Scale,
  sy: Scale,
  attrs: string,
): string {
  const upper = xs.map((x, i) => {
    const s = Math.sqrt(Math.max(variance[i] as number, 0));
    return `${px(sx(x))},${px(sy((mu[i] as number) + 2 * s))}`;
  });
  const lower = xs.map((x, i) => {
    const s = Math.sqrt(Math.max(variance[i] as number, 0));
    return `${px(sx(x))},${px(sy((mu[i] as number) - 2 * s))}`;
  });
  lower.reverse();
  return `<polygon ${attrs} points="${upper.join(" ")} ${lower.join(" ")}"/>`;
}

function axes(rect: Rect, sx: Scale, sy: Scale, yTickCount: number): string {
  const parts: string[] = [];
  parts.push(
    `<rect x="${px(rect.x0)}" y="${px(rect.y0)}" width="${px(rect.x1 - rect.x0)}" ` +
      `height="${px(rect.y1 - rect.y0)}" fill="none" stroke="#999" stroke-width="1"/>`,
  );
  for (const t of ticks(sx.lo, sx.hi, 4)) {
    const x = px(sx(t));
    parts.push(
      `<line x1="${x}" y1="${px(rect.y1)}" x2="${x}" y2="${px(rect.y1 + 4)}" stroke="#999"/>`,
      `<text x="${x}" y="${px(rect.y1 + 16)}" text-anchor="middle" class="tick">${fmtValue(t)}</text>`,
    );
  }
  for (const t of ticks(sy.lo, sy.hi, yTickCount)) {
    const y = px(sy(t));
    parts.push(
      `<line x1="${px(rect.x0 - 4)}" y1="${y}" x2="${px(rect.x0)}" y2="${y}" stroke="#999"/>`,
      `<text x="${px(rect.x0 - 7)}" y="${px(sy(t) + 3.5)}" text-anchor="end" class="tick">${fmtValue(t)}</text>`,
    );
  }
  return parts.join("\n");
}

function svgShell(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">\n` +
    `<style>.tick{font-size:10px;fill:#555}.label{font-size:11px;fill:#333}` +
    `.header-title{font-size:15px;font-weight:bold}.hint{fill:#777;font-style:italic}</style>\n` +
    body +
    "\n</svg>"
  );
}

/** Full-frame error panel; used instead of any partial plot. */
export function renderErrorPanel(message: string, options: RenderOptions = {}): string {
  const width = options.width ?? W;
  const height = options.height ?? H;
  const body = [
    `<g class="error-panel">`,
    `<rect x="0" y="0" width="${width}" height="${height}" fill="#fff4f4"/>`,
    `<rect x="20" y="20" width="${width - 40}" height="${height - 40}" fill="none" stroke="#c0392b" stroke-width="2"/>`,
    `<text x="${width / 2}" y="${height / 2 - 12}" text-anchor="middle" class="header-title" fill="#c0392b">Cannot render session</text>`,
    `<text x="${width / 2}" y="${height / 2 + 12}" text-anchor="middle" fill="#702">${esc(message)}</text>`,
    `</g>`,
  ].join("\n");
  return svgShell(width, height, body);
}

function header(snap: SessionSnapshot, width: number): string {
  const maxIter = snap.config.max_iterations;
  const bestX = snap.best.x[0] as number;
  const fid = snap.best.fidelity === 1 ? "high" : "low";
  const lines = [
    `<g class="header">`,
    `<text x="16" y="24" class="header-title">Session ${esc(snap.session_id)}</text>`,
    `<text x="16" y="44">iteration ${snap.iteration}${typeof maxIter === "number" ? ` / ${maxIter}` : ""}` +
      ` · status ${esc(snap.status)}` +
      ` · best y = ${fmtValue(snap.best.y)} at x = ${fmtValue(bestX)} (${fid} fidelity)</text>`,
  ];
  if (snap.pending_prompt !== null) {
    lines.push(
      `<g class="prompt-banner">`,
      `<rect x="${width - 340}" y="8" width="324" height="40" fill="#fff3cd" stroke="#b8860b"/>`,
      `<text x="${width - 328}" y="25" class="label">Operator input requested:</text>`,
      `<text x="${width - 328}" y="41" class="label">${esc(truncate(snap.pending_prompt.message, 52))}</text>`,
      `</g>`,
    );
  }
  lines.push(`</g>`);
  return lines.join("\n");
}

function truncate(s: string, n: number): string {
  return s.length <= n ? s : s.slice(0, n - 1) + "…";
}

/// Resolved view state: zoom window plus overlay visibility.
interface ViewFilter {
  xLo: number;
  xHi: number;
  showHigh: boolean;
  showLow: boolean;
}

function resolveView(snap: SessionSnapshot, options: RenderOptions): ViewFilter {
  const win = options.xWindow;
  const usable =
    win !== undefined &&
    Number.isFinite(win[0]) &&
    Number.isFinite(win[1]) &&
    win[0] < win[1];
  return {
    xLo: usable ? win[0] : snap.grid_spec.lo,
    xHi: usable ? win[1] : snap.grid_spec.hi,
    showHigh: options.showHigh ?? true,
    showLow: options.showLow ?? true,
  };
}

/// Grid indices inside the zoom window; y auto-scaling ignores clipped points.
function windowIndices(grid: number[], view: ViewFilter): number[] {
  const idx: number[] = [];
  for (let i = 0; i < grid.length; i++) {
    const x = grid[i] as number;
    if (x >= view.xLo && x <= view.xHi) idx.push(i);
  }
  return idx;
}

function clipDef(id: string, rect: Rect): string {
  return (
    `<defs><clipPath id="${id}"><rect x="${px(rect.x0)}" y="${px(rect.y0)}" ` +
    `width="${px(rect.x1 - rect.x0)}" height="${px(rect.y1 - rect.y0)}"/></clipPath></defs>`
  );
}

function observationMarkers(
  snap: SessionSnapshot,
  view: ViewFilter,
  sx: Scale,
  sy: Scale,
): string {
  const parts: string[] = [];
  for (const [x, f, y] of snap.observations) {
    if (f === 1 && view.showHigh) {
      parts.push(
        `<circle class="obs-high" cx="${px(sx(x))}" cy="${px(sy(y))}" r="4.5" ` +
          `fill="${COLOR_HIGH}" stroke="#8a6d00" stroke-width="1"/>`,
      );
    } else if (f === 0 && view.showLow) {
      parts.push(
        `<circle class="obs-low" cx="${px(sx(x))}" cy="${px(sy(y))}" r="3.5" ` +
          `fill="${COLOR_LOW}"/>`,
      );
    }
  }
  // Ring the incumbent so it stands out among the markers.
  const bestVisible = snap.best.fidelity === 1 ? view.showHigh : view.showLow;
  if (bestVisible) {
    const bx = snap.best.x[0] as number;
    parts.push(
      `<circle class="best-marker" cx="${px(sx(bx))}" cy="${px(sy(snap.best.y))}" r="8" ` +
        `fill="none" stroke="#c0392b" stroke-width="1.5"/>`,
    );
  }
  return parts.join("\n");
}

function mainPanel(snap: SessionSnapshot, view: ViewFilter, rect: Rect): string {
  const sx = linearScale(view.xLo, view.xHi, rect.x0, rect.x1);
  const yValues: number[] = [];
  for (const [x, f, y] of snap.observations) {
    const shown = f === 1 ? view.showHigh : view.showLow;
    if (shown && x >= view.xLo && x <= view.xHi) yValues.push(y);
  }
  const post = snap.posterior;
  if (post !== null) {
    for (const i of windowIndices(snap.grid, view)) {
      if (view.showHigh) {
        const sh = Math.sqrt(Math.max(post.var_high[i] as number, 0));
        yValues.push((post.mu_high[i] as number) + 2 * sh);
        yValues.push((post.mu_high[i] as number) - 2 * sh);
      }
      if (view.showLow) {
        const sl = Math.sqrt(Math.max(post.var_low[i] as number, 0));
        yValues.push((post.mu_low[i] as number) + 2 * sl);
        yValues.push((post.mu_low[i] as number) - 2 * sl);
      }
    }
  }
  const [lo, hi] = niceRange(yValues);
  const sy = linearScale(lo, hi, rect.y1, rect.y0); // y grows upward
  const parts: string[] = [`<g class="main-panel">`, clipDef("clip-main", rect)];
  parts.push(`<g clip-path="url(#clip-main)">`);
  if (post !== null) {
    if (view.showLow) {
      parts.push(
        band(snap.grid, post.mu_low, post.var_low, sx, sy, `class="band-low" fill="${COLOR_LOW}" fill-opacity="0.10"`),
      );
    }
    if (view.showHigh) {
      parts.push(
        band(snap.grid, post.mu_high, post.var_high, sx, sy, `class="band-high" fill="${COLOR_HIGH}" fill-opacity="0.22"`),
      );
    }
    if (view.showLow) {
      parts.push(
        polyline(snap.grid, post.mu_low, sx, sy, `class="mean-low" stroke="${COLOR_LOW}" stroke-width="1.5" stroke-dasharray="6 3"`),
      );
    }
    if (view.showHigh) {
      parts.push(
        polyline(snap.grid, post.mu_high, sx, sy, `class="mean-high" stroke="${COLOR_HIGH}" stroke-width="2"`),
      );
    }
  }
  parts.push(observationMarkers(snap, view, sx, sy));
  parts.push(`</g>`);
  parts.push(axes(rect, sx, sy, 4));
  parts.push(
    `<text x="${px(rect.x0)}" y="${px(rect.y0 - 8)}" class="label">objective` +
      ` · posterior mean ± 2σ (yellow = high fidelity, black = low)</text>`,
  );
  parts.push(`</g>`);
  return parts.join("\n");
}

function acquisitionPanel(snap: SessionSnapshot, view: ViewFilter, rect: Rect): string {
  const parts: string[] = [`<g class="acq-panel">`];
  const acq = snap.acquisition;
  const sx = linearScale(view.xLo, view.xHi, rect.x0, rect.x1);
  if (acq === null) {
    const sy = linearScale(0, 1, rect.y1, rect.y0);
    parts.push(axes(rect, sx, sy, 2));
    parts.push(
      `<text class="acq-empty hint" x="${px((rect.x0 + rect.x1) / 2)}" ` +
        `y="${px((rect.y0 + rect.y1) / 2)}" text-anchor="middle">` +
        `no acquisition yet (awaiting first fit)</text>`,
    );
  } else {
    const uValues: number[] = [0];
    for (const i of windowIndices(snap.grid, view)) {
      if (view.showHigh) uValues.push(acq.u_high[i] as number);
      if (view.showLow) uValues.push(acq.u_low[i] as number);
    }
    const [lo, hi] = niceRange(uValues);
    const sy = linearScale(lo, hi, rect.y1, rect.y0);
    parts.push(clipDef("clip-acq", rect), `<g clip-path="url(#clip-acq)">`);
    if (view.showLow) {
      parts.push(
        polyline(snap.grid, acq.u_low, sx, sy, `class="acq-low" stroke="${COLOR_LOW}" stroke-width="1.5" stroke-dasharray="6 3"`),
      );
    }
    if (view.showHigh) {
      parts.push(
        polyline(snap.grid, acq.u_high, sx, sy, `class="acq-high" stroke="${COLOR_HIGH}" stroke-width="2"`),
      );
    }
    parts.push(`</g>`, axes(rect, sx, sy, 2));
  }
  parts.push(
    `<text x="${px(rect.x0)}" y="${px(rect.y0 - 8)}" class="label">acquisition (cost-weighted improvement per fidelity)</text>`,
  );
  parts.push(`</g>`);
  return parts.join("\n");
}

/** Render a raw snapshot document. Invalid input produces the error panel;
 * there is no partially drawn state. */
export function renderSession(doc: unknown, options: RenderOptions = {}): string {
  const width = options.width ?? W;
  const height = options.height ?? H;
  let snap: SessionSnapshot;
  try {
    snap = parseSnapshot(doc);
  } catch (err) {
    const msg =
      err instanceof SnapshotFormatError ? err.message : "unexpected snapshot error";
    return renderErrorPanel(msg, options);
  }
  const column = width - MARGIN.left - MARGIN.right;
  const plotHeight = height - MARGIN.top - MARGIN.bottom - GAP;
  const acqH = Math.round(plotHeight * ACQ_FRACTION);
  const mainRect: Rect = {
    x0: MARGIN.left,
    y0: MARGIN.top,
    x1: MARGIN.left + column,
    y1: MARGIN.top + plotHeight - acqH,
  };
  const acqRect: Rect = {
    x0: MARGIN.left,
    y0: mainRect.y1 + GAP,
    x1: MARGIN.left + column,
    y1: mainRect.y1 + GAP + acqH,
  };
  const view = resolveView(snap, options);
  const body = [
    header(snap, width),
    mainPanel(snap, view, mainRect),
    acquisitionPanel(snap, view, acqRect),
  ].join("\n");
  return svgShell(width, height, body);
}
