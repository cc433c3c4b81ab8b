"""Evaluable objective backends.

Two analytic multi-fidelity test problems on [0, 10] and two Ising lattice
simulators (square lattice with Metropolis flips, triangular lattice with
Kawasaki exchanges) whose output is heat capacity as a function of the
spin-spin interaction J, with lattice size as the fidelity axis.
"""

from .analytic import (
    DOMAIN,
    PROBLEM_IDS,
    AnalyticProblem,
    eval_analytic,
    problem_optimum,
    problem_truth,
)
from .ising import (
    IsingConfig,
    SpinLattice,
    lattice_energy,
    metropolis_sweep,
    kawasaki_sweep,
    simulate_heat_capacity,
    scan_heat_capacity,
)

__all__ = [
    "DOMAIN",
    "PROBLEM_IDS",
    "AnalyticProblem",
    "eval_analytic",
    "problem_optimum",
    "problem_truth",
    "IsingConfig",
    "SpinLattice",
    "lattice_energy",
    "metropolis_sweep",
    "kawasaki_sweep",
    "simulate_heat_capacity",
    "scan_heat_capacity",
]
