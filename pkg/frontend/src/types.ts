/** Wire types for the optimization service plus a defensive parser.
 *
 * The shapes mirror the JSON the service emits. parseSnapshot validates
 * before anything touches the data, so a malformed payload becomes a single
 * SnapshotFormatError instead of a half-rendered view.
 */

export type SessionStatus = "running" | "awaiting_policy" | "converged" | "stopped";

export const SESSION_STATUSES: readonly SessionStatus[] = [
  "running",
  "awaiting_policy",
  "converged",
  "stopped",
];

export type PolicyKind =
  | "parameter_space"
  | "surrogate"
  | "cost_ratio"
  | "convergence"
  | "force_final_high_fidelity"
  | "stop"
  | "no_change";

export const POLICY_KINDS: readonly PolicyKind[] = [
  "parameter_space",
  "surrogate",
  "cost_ratio",
  "convergence",
  "force_final_high_fidelity",
  "stop",
  "no_change",
];

export const SPATIAL_FAMILIES = ["rbf", "matern52"] as const;
export type SpatialFamily = (typeof SPATIAL_FAMILIES)[number];

export const MEAN_KINDS = ["zero", "piecewise_offset", "gaussian_peak"] as const;
export type MeanKind = (typeof MEAN_KINDS)[number];

export interface GridSpec {
  lo: number;
  hi: number;
  resolution: number;
}

/// [x..., fidelity, y] rows; this client only handles 1-D, so x is one value.
export type ObservationRow = [number, number, number];

export interface BestPoint {
  x: number[];
  fidelity: number;
  y: number;
}

export interface PosteriorCurves {
  mu_high: number[];
  var_high: number[];
  mu_low: number[];
  var_low: number[];
}

export interface AcquisitionCurves {
  u_high: number[];
  u_low: number[];
}

export interface PendingPrompt {
  message: string;
  options: string[];
}

export interface MeanSpecDoc {
  kind: MeanKind;
  base_form?: string;
  param_priors?: Record<string, unknown>;
}

export interface PolicyChangeDoc {
  kind: PolicyKind;
  new_bounds?: [number, number][] | null;
  new_mean?: MeanSpecDoc | null;
  new_spatial_family?: SpatialFamily | null;
  new_cost_ratio?: number | null;
  new_max_iterations?: number | null;
  issued_at?: number;
  issuer?: "human" | "scripted";
}

export interface PolicyLogEntry {
  change: PolicyChangeDoc;
  applied_at: number;
}

export interface SessionSnapshot {
  schema_version: number;
  session_id: string;
  iteration: number;
  status: SessionStatus;
  grid_spec: GridSpec;
  grid: number[];
  observations: ObservationRow[];
  best: BestPoint;
  posterior: PosteriorCurves | null;
  acquisition: AcquisitionCurves | null;
  pending_prompt: PendingPrompt | null;
  policy_log: PolicyLogEntry[];
  config: Record<string, unknown>;
  diagnostic: string | null;
}

export class SnapshotFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SnapshotFormatError";
  }
}

function fail(path: string, want: string, got: unknown): never {
  throw new SnapshotFormatError(`${path}: expected ${want}, got ${describe(got)}`);
}

function describe(v: unknown): string {
  if (v === null) return "null";
  if (Array.isArray(v)) return `array(${v.length})`;
  return typeof v;
}

function asRecord(v: unknown, path: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    fail(path, "object", v);
  }
  return v as Record<string, unknown>;
}

function asNumber(v: unknown, path: string): number {
  if (typeof v !== "number" || Number.isNaN(v)) fail(path, "number", v);
  return v;
}

function asString(v: unknown, path: string): string {
  if (typeof v !== "string") fail(path, "string", v);
  return v;
}

function asNumberArray(v: unknown, path: string): number[] {
  if (!Array.isArray(v)) fail(path, "number[]", v);
  return v.map((item, i) => asNumber(item, `${path}[${i}]`));
}

function sameLength(a: number[], b: number[], pathA: string, pathB: string): void {
  if (a.length !== b.length) {
    throw new SnapshotFormatError(
      `${pathB}: length ${b.length} does not match ${pathA} length ${a.length}`,
    );
  }
}

function parsePosterior(v: unknown, grid: number[]): PosteriorCurves | null {
  if (v === null || v === undefined) return null;
  const rec = asRecord(v, "posterior");
  const out: PosteriorCurves = {
    mu_high: asNumberArray(rec.mu_high, "posterior.mu_high"),
    var_high: asNumberArray(rec.var_high, "posterior.var_high"),
    mu_low: asNumberArray(rec.mu_low, "posterior.mu_low"),
    var_low: asNumberArray(rec.var_low, "posterior.var_low"),
  };
  for (const key of ["mu_high", "var_high", "mu_low", "var_low"] as const) {
    sameLength(grid, out[key], "grid", `posterior.${key}`);
  }
  return out;
}

function parseAcquisition(v: unknown, grid: number[]): AcquisitionCurves | null {
  if (v === null || v === undefined) return null;
  const rec = asRecord(v, "acquisition");
  const out: AcquisitionCurves = {
    u_high: asNumberArray(rec.u_high, "acquisition.u_high"),
    u_low: asNumberArray(rec.u_low, "acquisition.u_low"),
  };
  sameLength(grid, out.u_high, "grid", "acquisition.u_high");
  sameLength(grid, out.u_low, "grid", "acquisition.u_low");
  return out;
}

function parseObservations(v: unknown): ObservationRow[] {
  if (!Array.isArray(v)) fail("observations", "array", v);
  return v.map((row, i) => {
    if (!Array.isArray(row) || row.length !== 3) {
      fail(`observations[${i}]`, "[x, fidelity, y] (1-D only)", row);
    }
    const x = asNumber(row[0], `observations[${i}][0]`);
    const f = asNumber(row[1], `observations[${i}][1]`);
    const y = asNumber(row[2], `observations[${i}][2]`);
    if (f !== 0 && f !== 1) fail(`observations[${i}][1]`, "fidelity 0 or 1", f);
    return [x, f, y] as ObservationRow;
  });
}

function parsePrompt(v: unknown): PendingPrompt | null {
  if (v === null || v === undefined) return null;
  const rec = asRecord(v, "pending_prompt");
  const options = rec.options;
  if (!Array.isArray(options)) fail("pending_prompt.options", "string[]", options);
  return {
    message: asString(rec.message, "pending_prompt.message"),
    options: options.map((o, i) => asString(o, `pending_prompt.options[${i}]`)),
  };
}

function parsePolicyLog(v: unknown): PolicyLogEntry[] {
  if (!Array.isArray(v)) fail("policy_log", "array", v);
  return v.map((entry, i) => {
    const rec = asRecord(entry, `policy_log[${i}]`);
    const change = asRecord(rec.change, `policy_log[${i}].change`);
    const kind = asString(change.kind, `policy_log[${i}].change.kind`);
    if (!(POLICY_KINDS as readonly string[]).includes(kind)) {
      fail(`policy_log[${i}].change.kind`, `one of ${POLICY_KINDS.join(", ")}`, kind);
    }
    return {
      change: change as unknown as PolicyChangeDoc,
      applied_at: asNumber(rec.applied_at, `policy_log[${i}].applied_at`),
    };
  });
}

/** Validate a raw service payload into a SessionSnapshot or throw
 * SnapshotFormatError. Nothing is rendered from an unvalidated document. */
export function parseSnapshot(doc: unknown): SessionSnapshot {
  const rec = asRecord(doc, "snapshot");
  const status = asString(rec.status, "status");
  if (!(SESSION_STATUSES as readonly string[]).includes(status)) {
    fail("status", `one of ${SESSION_STATUSES.join(", ")}`, status);
  }
  const gridSpec = asRecord(rec.grid_spec, "grid_spec");
  const grid = asNumberArray(rec.grid, "grid");
  if (grid.length < 2) fail("grid", "at least two points", grid);
  const best = asRecord(rec.best, "best");
  const bestX = asNumberArray(best.x, "best.x");
  if (bestX.length !== 1) fail("best.x", "a single coordinate (1-D only)", bestX);
  return {
    schema_version: asNumber(rec.schema_version, "schema_version"),
    session_id: asString(rec.session_id, "session_id"),
    iteration: asNumber(rec.iteration, "iteration"),
    status: status as SessionStatus,
    grid_spec: {
      lo: asNumber(gridSpec.lo, "grid_spec.lo"),
      hi: asNumber(gridSpec.hi, "grid_spec.hi"),
      resolution: asNumber(gridSpec.resolution, "grid_spec.resolution"),
    },
    grid,
    observations: parseObservations(rec.observations),
    best: {
      x: bestX,
      fidelity: asNumber(best.fidelity, "best.fidelity"),
      y: asNumber(best.y, "best.y"),
    },
    posterior: parsePosterior(rec.posterior, grid),
    acquisition: parseAcquisition(rec.acquisition, grid),
    pending_prompt: parsePrompt(rec.pending_prompt),
    policy_log: parsePolicyLog(rec.policy_log),
    config: asRecord(rec.config, "config"),
    diagnostic:
      rec.diagnostic === null || rec.diagnostic === undefined
        ? null
        : asString(rec.diagnostic, "diagnostic"),
  };
}
