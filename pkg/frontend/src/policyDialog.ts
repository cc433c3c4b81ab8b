/** Operator policy dialog: the interactive checkpoint's state machine.
 *
 * The flow mirrors the service prompt: first a Yes/No answer ("change the
 * strategy?"), then a multi-select over the four prompt options, each with
 * its own inputs. Validation runs client-side before anything is sent and
 * mirrors the service's rules, so a batch that would be rejected for a
 * malformed value never leaves the browser. A server rejection (422) keeps
 * the dialog open with the rejection text inline.
 *
 * This module holds no DOM; main.ts binds it to elements, tests drive it
 * directly.
 */

import { ApiError } from "./api.js";
import type { SessionApi } from "./api.js";
import type {
  MeanKind,
  MeanSpecDoc,
  PolicyChangeDoc,
  SessionSnapshot,
  SpatialFamily,
} from "./types.js";

export type OptionKey = "parameter_space" | "surrogate" | "cost_ratio" | "convergence";

export const OPTION_KEYS: readonly OptionKey[] = [
  "parameter_space",
  "surrogate",
  "cost_ratio",
  "convergence",
];

/// Prompt wording used by the service, keyed by the change kind it maps to.
export const OPTION_LABELS: Record<OptionKey, string> = {
  parameter_space: "parameter space",
  surrogate: "surrogate model",
  cost_ratio: "acquisition function",
  convergence: "convergence criteria",
};

/// Documented default priors for each structured mean; sent whenever the
/// operator picks a mean kind without hand-tuning priors.
const MEAN_PRESETS: Record<Exclude<MeanKind, "zero">, MeanSpecDoc> = {
  gaussian_peak: {
    kind: "gaussian_peak",
    base_form: "f1",
    param_priors: {
      a: { family: "halfnormal", scale: 0.5 },
      b: { family: "halfnormal", scale: 1.17 },
      c: { family: "halfnormal", scale: 2.0 },
    },
  },
  piecewise_offset: {
    kind: "piecewise_offset",
    base_form: "f1",
    param_priors: {
      a: { family: "normal", mu: 0.0, sd: 1.0 },
      b: { family: "normal", mu: 15.0, sd: 2.0 },
      c: { family: "uniform", lo: 5.0, hi: 10.0 },
    },
  },
};

export function meanPreset(kind: MeanKind): MeanSpecDoc {
  if (kind === "zero") return { kind: "zero" };
  return structuredClone(MEAN_PRESETS[kind]);
}

export interface DialogContext {
  sessionId: string;
  /// Iteration count k at prompt time; convergence changes must exceed it.
  iteration: number;
  bounds: [number, number][];
  promptMessage: string;
}

export function contextFromSnapshot(snap: SessionSnapshot): DialogContext {
  const domain = snap.config.domain as [number, number][] | undefined;
  return {
    sessionId: snap.session_id,
    iteration: snap.iteration,
    bounds: domain ?? [[snap.grid_spec.lo, snap.grid_spec.hi]],
    promptMessage: snap.pending_prompt?.message ?? "",
  };
}

export type FieldKey = OptionKey | "answer" | "options";

export class PolicyDialogModel {
  readonly context: DialogContext;
  open = true;

  /// Step one: null until the operator answers Yes (true) or No (false).
  continueWithChanges: boolean | null = null;
  selected: Set<OptionKey> = new Set();

  // Raw input state, kept as strings until build time.
  boundsText: [string, string][];
  meanKind: MeanKind | "" = "";
  spatialFamily: SpatialFamily | "" = "";
  costRatioText = "";
  maxIterationsText = "";

  errors: Partial<Record<FieldKey, string>> = {};
  serverError: string | null = null;
  submitting = false;

  constructor(context: DialogContext) {
    this.context = context;
    this.boundsText = context.bounds.map(([lo, hi]) => [String(lo), String(hi)]);
  }

  answer(yes: boolean): void {
    this.continueWithChanges = yes;
    this.errors = {};
    this.serverError = null;
  }

  toggle(option: OptionKey): void {
    if (this.selected.has(option)) this.selected.delete(option);
    else this.selected.add(option);
    delete this.errors[option];
  }

  /** Mirror of the service-side checks. Returns true when submission may
   * proceed; otherwise this.errors says what is wrong, per field. */
  validate(): boolean {
    const errors: Partial<Record<FieldKey, string>> = {};
    if (this.continueWithChanges === null) {
      errors.answer = "Answer yes or no first.";
    } else if (this.continueWithChanges) {
      if (this.selected.size === 0) {
        errors.options = "Select at least one aspect to change, or answer no.";
      }
      if (this.selected.has("parameter_space")) {
        for (const [lo, hi] of this.boundsText) {
          const flo = Number(lo);
          const fhi = Number(hi);
          if (lo.trim() === "" || hi.trim() === "" || !Number.isFinite(flo) || !Number.isFinite(fhi)) {
            errors.parameter_space = "Bounds must be numbers.";
            break;
          }
          if (!(flo < fhi)) {
            errors.parameter_space = `Lower bound must be below upper bound (got [${flo}, ${fhi}]).`;
            break;
          }
        }
      }
      if (this.selected.has("surrogate") && this.meanKind === "" && this.spatialFamily === "") {
        errors.surrogate = "Pick a mean model or a kernel family (or both).";
      }
      if (this.selected.has("cost_ratio")) {
        const c = Number(this.costRatioText);
        if (this.costRatioText.trim() === "" || !Number.isFinite(c) || !(c > 0)) {
          errors.cost_ratio = "New cost ratio must be a positive number.";
        }
      }
      if (this.selected.has("convergence")) {
        const m = Number(this.maxIterationsText);
        if (this.maxIterationsText.trim() === "" || !Number.isInteger(m)) {
          errors.convergence = "New iteration budget must be an integer.";
        } else if (m <= this.context.iteration) {
          errors.convergence =
            `New iteration budget must exceed the current iteration ` +
            `k = ${this.context.iteration}.`;
        }
      }
    }
    this.errors = errors;
    return Object.keys(errors).length === 0;
  }

  /** The policy batch this dialog state describes. Call validate() first;
   * "no" answers become a single explicit no-change record. */
  buildChanges(): PolicyChangeDoc[] {
    const issued = { issued_at: this.context.iteration, issuer: "human" as const };
    if (this.continueWithChanges === false) {
      return [{ kind: "no_change", ...issued }];
    }
    const changes: PolicyChangeDoc[] = [];
    for (const option of OPTION_KEYS) {
      if (!this.selected.has(option)) continue;
      if (option === "parameter_space") {
        changes.push({
          kind: "parameter_space",
          new_bounds: this.boundsText.map(([lo, hi]) => [Number(lo), Number(hi)]),
          ...issued,
        });
      } else if (option === "surrogate") {
        changes.push({
          kind: "surrogate",
          new_mean: this.meanKind === "" ? null : meanPreset(this.meanKind),
          new_spatial_family: this.spatialFamily === "" ? null : this.spatialFamily,
          ...issued,
        });
      } else if (option === "cost_ratio") {
        changes.push({
          kind: "cost_ratio",
          new_cost_ratio: Number(this.costRatioText),
          ...issued,
        });
      } else {
        changes.push({
          kind: "convergence",
          new_max_iterations: Number(this.maxIterationsText),
          ...issued,
        });
      }
    }
    return changes;
  }

  /** Validate, then send the batch. Returns the refreshed snapshot on
   * success (dialog closes); null when blocked client-side or rejected by
   * the service (dialog stays open with errors shown). */
  async submit(api: SessionApi): Promise<SessionSnapshot | null> {
    this.serverError = null;
    if (!this.validate()) return null;
    this.submitting = true;
    try {
      const snapshot = await api.submitPolicy(this.context.sessionId, this.buildChanges());
      this.open = false;
      return snapshot;
    } catch (err) {
      if (err instanceof ApiError) {
        this.serverError = err.detail;
      } else {
        this.serverError = err instanceof Error ? err.message : String(err);
      }
      return null;
    } finally {
      this.submitting = false;
    }
  }
}

/** State-driven dialog rule. A snapshot waiting on policy input always has an
 * open dialog (a fresh one when none is showing, so a page reload mid-prompt
 * reopens it); any other status dismisses whatever is open. */
export function nextDialog(
  current: PolicyDialogModel | null,
  snap: SessionSnapshot,
): PolicyDialogModel | null {
  if (snap.status === "awaiting_policy" && snap.pending_prompt !== null) {
    if (current !== null && current.open) return current;
    return new PolicyDialogModel(contextFromSnapshot(snap));
  }
  return null;
}
