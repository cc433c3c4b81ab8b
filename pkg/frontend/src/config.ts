/** Builders for complete session configuration documents.
 *
 * The service validates configs in their full, round-trippable form; there
 * are no partial-document shorthands on the wire. This module spells out
 * the documented defaults so callers only touch the fields they care about.
 */

export interface PriorDoc {
  family: "uniform" | "normal" | "halfnormal" | "pointmass";
  lo?: number;
  hi?: number;
  mu?: number;
  sd?: number;
  scale?: number;
  value?: number;
}

export interface SessionConfigDoc {
  objective: { objective_id: string; ising_low?: unknown; ising_high?: unknown };
  domain: [number, number][];
  init_count: number;
  init_fidelity_rule: { kind: "coin" | "fixed"; n_low: number | null; n_high: number | null };
  max_iterations: number;
  grid_resolution: number;
  acquisition: { cost_ratio: number; xi: number; tweak: number };
  surrogate: {
    spatial_family: "rbf" | "matern52";
    mean: { kind: string; base_form?: string; param_priors?: Record<string, PriorDoc> };
    hyper_priors: {
      sigma2: PriorDoc;
      length_scales: PriorDoc[];
      delta: PriorDoc;
      noise2: PriorDoc;
    };
    mcmc: { warmup: number; draws: number };
  };
  stall_window: number;
  rng_seed: number;
  mode: "noninteractive" | "interactive" | "single_fidelity_baseline";
}

const unif = (lo: number, hi: number): PriorDoc => ({ family: "uniform", lo, hi });

/** Fresh config document with the documented defaults: unit-interval
 * uniform priors on the kernel hyperparameters, half-normal(0.03) noise,
 * zero mean, one analytic test objective. */
export function sessionConfigTemplate(): SessionConfigDoc {
  return {
    objective: { objective_id: "problem2", ising_low: null, ising_high: null },
    domain: [[0.0, 10.0]],
    init_count: 10,
    init_fidelity_rule: { kind: "fixed", n_low: 7, n_high: 3 },
    max_iterations: 25,
    grid_resolution: 201,
    acquisition: { cost_ratio: 2.0, xi: 0.01, tweak: 1.0 },
    surrogate: {
      spatial_family: "rbf",
      mean: { kind: "zero" },
      hyper_priors: {
        sigma2: unif(0.01, 1.0),
        length_scales: [unif(0.01, 1.0)],
        delta: unif(0.01, 1.0),
        noise2: { family: "halfnormal", scale: 0.03 },
      },
      mcmc: { warmup: 150, draws: 150 },
    },
    stall_window: 5,
    rng_seed: 0,
    mode: "interactive",
  };
}
