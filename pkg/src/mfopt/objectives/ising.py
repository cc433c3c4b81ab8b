"""Ising lattice Monte Carlo with heat-capacity output.

Square lattices evolve by Metropolis single-spin flips (raster sweeps);
triangular lattices evolve by Kawasaki neighbor exchanges, which conserve
total magnetization exactly. A triangular lattice is a square index grid
with bond offsets right, down, and down-right, so each site has three bonds
(six neighbors). Both use periodic boundaries, the Hamiltonian
E = -J * sum over nearest-neighbor bonds, and one Monte Carlo step = one
sweep of n^2 attempted moves.

simulate_heat_capacity runs equil_sweeps discarded sweeps followed by
measure_sweeps sweeps with the total energy recorded after each, and
returns the per-spin fluctuation estimator (<E^2> - <E>^2) / (n^2 T^2).
All randomness is pre-drawn from a numpy Generator and handed to numba
kernels, so runs are bit-reproducible by seed and every accept decision can
be audited against the drawn uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

__all__ = [
    "IsingConfig",
    "SpinLattice",
    "SweepAudit",
    "lattice_energy",
    "metropolis_sweep",
    "kawasaki_sweep",
    "simulate_heat_capacity",
    "scan_heat_capacity",
]

LATTICE_KINDS = ("square", "triangular")
DYNAMICS = ("metropolis", "kawasaki")

# Bond offsets count each nearest-neighbor pair once; neighbor offsets list
# every neighbor of a site (used for local energy changes).
_BOND_OFFSETS = {
    "square": np.array([[0, 1], [1, 0]], dtype=np.int64),
    "triangular": np.array([[0, 1], [1, 0], [1, 1]], dtype=np.int64),
}
_NEIGHBOR_OFFSETS = {
    "square": np.array(
        [[0, 1], [0, -1], [1, 0], [-1, 0]], dtype=np.int64
    ),
    "triangular": np.array(
        [[0, 1], [0, -1], [1, 0], [-1, 0], [1, 1], [-1, -1]], dtype=np.int64
    ),
}


@dataclass(frozen=True)
class IsingConfig:
    """One simulation's parameters.

    n is the lattice side (20 = low fidelity, 60 = high fidelity in the
    default campaigns), temperature the reduced T, j_coupling the isotropic
    interaction strength. Kawasaki dynamics pairs with the triangular
    lattice; set allow_unpaired_dynamics to override that pairing.
    init_magnetization seeds the conserved magnetization (Kawasaki only).
    """

    lattice_kind: str = "square"
    n: int = 20
    temperature: float = 2.7
    j_coupling: float = 1.0
    equil_sweeps: int = 500
    measure_sweeps: int = 500
    dynamics: str = "metropolis"
    init_magnetization: float = 0.0
    rng_seed: int = 0
    allow_unpaired_dynamics: bool = False

    def __post_init__(self) -> None:
        if self.lattice_kind not in LATTICE_KINDS:
            raise ValueError(f"lattice_kind must be one of {LATTICE_KINDS}")
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"dynamics must be one of {DYNAMICS}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.equil_sweeps < 1 or self.measure_sweeps < 1:
            raise ValueError("equil_sweeps and measure_sweeps must be >= 1")
        if not -1.0 <= self.init_magnetization <= 1.0:
            raise ValueError("init_magnetization must lie in [-1, 1]")
        if (
            self.dynamics == "kawasaki"
            and self.lattice_kind != "triangular"
            and not self.allow_unpaired_dynamics
        ):
            raise ValueError(
                "kawasaki dynamics pairs with the triangular lattice; "
                "set allow_unpaired_dynamics=True to override"
            )

    def to_dict(self) -> dict:
        return {
            "lattice_kind": self.lattice_kind,
            "n": self.n,
            "temperature": self.temperature,
            "j_coupling": self.j_coupling,
            "equil_sweeps": self.equil_sweeps,
            "measure_sweeps": self.measure_sweeps,
            "dynamics": self.dynamics,
            "init_magnetization": self.init_magnetization,
            "rng_seed": self.rng_seed,
            "allow_unpaired_dynamics": self.allow_unpaired_dynamics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsingConfig":
        return cls(**d)


@dataclass
class SpinLattice:
    """Spin array (+1/-1 entries) plus its neighbor topology."""

    spins: np.ndarray
    lattice_kind: str = "square"

    def __post_init__(self) -> None:
        spins = np.asarray(self.spins, dtype=np.int8)
        if spins.ndim != 2 or spins.shape[0] != spins.shape[1]:
            raise ValueError(f"spins must be square, got shape {spins.shape}")
        if not np.all(np.abs(spins) == 1):
            raise ValueError("every spin must be +1 or -1")
        if self.lattice_kind not in LATTICE_KINDS:
            raise ValueError(f"lattice_kind must be one of {LATTICE_KINDS}")
        self.spins = spins

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    @property
    def magnetization(self) -> int:
        return int(self.spins.sum())


@dataclass(frozen=True)
class SweepAudit:
    """Per-attempt record of one sweep, in attempt order.

    d_e holds the local energy change of each proposal, accepted the
    decision, uniforms the random numbers the decisions were tested
    against. Kawasaki audits also carry the chosen site and partner."""

    d_e: np.ndarray
    accepted: np.ndarray
    uniforms: np.ndarray
    site_i: np.ndarray | None = None
    site_j: np.ndarray | None = None
    partner_i: np.ndarray | None = None
    partner_j: np.ndarray | None = None


def lattice_energy(lat: SpinLattice, j: float) -> float:
    """E = -J * sum of s_i * s_k over each nearest-neighbor bond once,
    periodic boundaries."""
    s = lat.spins.astype(np.int64)
    total = 0
    for di, dj in _BOND_OFFSETS[lat.lattice_kind]:
        total += int(np.sum(s * np.roll(np.roll(s, -di, axis=0), -dj, axis=1)))
    return -float(j) * float(total)


@njit(cache=True)
def _metropolis_sweep_kernel(spins, nbr, j, t, u, d_e, acc):  # pragma: no cover
    n = spins.shape[0]
    k = 0
    for i in range(n):
        for jj in range(n):
            s = spins[i, jj]
            h = 0
            for q in range(nbr.shape[0]):
                h += spins[(i + nbr[q, 0]) % n, (jj + nbr[q, 1]) % n]
            de = 2.0 * j * s * h
            d_e[k] = de
            if de < 0.0 or u[k] < np.exp(-de / t):
                spins[i, jj] = -s
                acc[k] = True
            else:
                acc[k] = False
            k += 1


@njit(cache=True)
def _kawasaki_sweep_kernel(
    spins, nbr, j, t, site_i, site_j, dirs, u, d_e, acc, part_i, part_j
):  # pragma: no cover
    n = spins.shape[0]
    n_nbr = nbr.shape[0]
    for k in range(site_i.shape[0]):
        i1 = site_i[k]
        j1 = site_j[k]
        q = dirs[k]
        i2 = (i1 + nbr[q, 0]) % n
        j2 = (j1 + nbr[q, 1]) % n
        part_i[k] = i2
        part_j[k] = j2
        s1 = spins[i1, j1]
        s2 = spins[i2, j2]
        if s1 == s2:
            d_e[k] = 0.0
            acc[k] = False
            continue
        # Local fields around each site, excluding every bond to the partner
        # (the pair bond itself is invariant under the exchange).
        h1 = 0
        h2 = 0
        for q2 in range(n_nbr):
            ai = (i1 + nbr[q2, 0]) % n
            aj = (j1 + nbr[q2, 1]) % n
            if not (ai == i2 and aj == j2):
                h1 += spins[ai, aj]
            bi = (i2 + nbr[q2, 0]) % n
            bj = (j2 + nbr[q2, 1]) % n
            if not (bi == i1 and bj == j1):
                h2 += spins[bi, bj]
        de = -j * ((s2 - s1) * h1 + (s1 - s2) * h2)
        d_e[k] = de
        if de < 0.0 or u[k] < np.exp(-de / t):
            spins[i1, j1] = s2
            spins[i2, j2] = s1
            acc[k] = True
        else:
            acc[k] = False


def metropolis_sweep(
    lat: SpinLattice,
    j: float,
    t: float,
    rng: np.random.Generator,
    audit: bool = False,
) -> SpinLattice | tuple[SpinLattice, SweepAudit]:
    """One sweep of n^2 single-spin-flip attempts in raster order.

    Each attempt accepts when its local energy change de satisfies de < 0 or
    u < exp(-de/t) for the next drawn uniform u. Mutates and returns lat.
    """
    if not t > 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    n = lat.n
    nbr = _NEIGHBOR_OFFSETS[lat.lattice_kind]
    u = rng.random(n * n)
    d_e = np.empty(n * n)
    acc = np.empty(n * n, dtype=np.bool_)
    _metropolis_sweep_kernel(lat.spins, nbr, float(j), float(t), u, d_e, acc)
    if audit:
        return lat, SweepAudit(d_e=d_e, accepted=acc, uniforms=u)
    return lat


def kawasaki_sweep(
    lat: SpinLattice,
    j: float,
    t: float,
    rng: np.random.Generator,
    audit: bool = False,
) -> SpinLattice | tuple[SpinLattice, SweepAudit]:
    """One sweep of n^2 attempted neighbor exchanges.

    Each attempt picks a uniform random site and a uniform random neighbor;
    equal-spin pairs count as rejected attempts. Accepted exchanges swap the
    two spins, so the total magnetization never changes. Mutates and
    returns lat.
    """
    if not t > 0:
        raise ValueError(f"temperature must be > 0, got {t}")
    n = lat.n
    nbr = _NEIGHBOR_OFFSETS[lat.lattice_kind]
    m = n * n
    site_i = rng.integers(0, n, size=m)
    site_j = rng.integers(0, n, size=m)
    dirs = rng.integers(0, nbr.shape[0], size=m)
    u = rng.random(m)
    d_e = np.empty(m)
    acc = np.empty(m, dtype=np.bool_)
    part_i = np.empty(m, dtype=np.int64)
    part_j = np.empty(m, dtype=np.int64)
    _kawasaki_sweep_kernel(
        lat.spins, nbr, float(j), float(t), site_i, site_j, dirs, u, d_e, acc,
        part_i, part_j,
    )
    if audit:
        return lat, SweepAudit(
            d_e=d_e, accepted=acc, uniforms=u,
            site_i=site_i, site_j=site_j, partner_i=part_i, partner_j=part_j,
        )
    return lat


def _initial_lattice(cfg: IsingConfig, rng: np.random.Generator) -> SpinLattice:
    n = cfg.n
    if cfg.dynamics == "kawasaki":
        n_up = int(round(n * n * (1.0 + cfg.init_magnetization) / 2.0))
        n_up = min(max(n_up, 0), n * n)
        flat = np.full(n * n, -1, dtype=np.int8)
        flat[:n_up] = 1
        spins = rng.permutation(flat).reshape(n, n)
    else:
        spins = np.where(rng.random((n, n)) < 0.5, 1, -1).astype(np.int8)
    return SpinLattice(spins=spins, lattice_kind=cfg.lattice_kind)


def simulate_heat_capacity(cfg: IsingConfig) -> float:
    """Equilibrate, measure energy per sweep, return the per-spin
    heat capacity (<E^2> - <E>^2) / (n^2 T^2). Reproducible by rng_seed."""
    rng = np.random.default_rng(cfg.rng_seed)
    lat = _initial_lattice(cfg, rng)
    sweep = kawasaki_sweep if cfg.dynamics == "kawasaki" else metropolis_sweep
    for _ in range(cfg.equil_sweeps):
        sweep(lat, cfg.j_coupling, cfg.temperature, rng)
    energies = np.empty(cfg.measure_sweeps)
    for i in range(cfg.measure_sweeps):
        sweep(lat, cfg.j_coupling, cfg.temperature, rng)
        energies[i] = lattice_energy(lat, cfg.j_coupling)
    var_e = float(np.var(energies))
    return var_e / (cfg.n * cfg.n * cfg.temperature * cfg.temperature)


def scan_heat_capacity(
    cfg_template: IsingConfig,
    j_values: np.ndarray,
    seeds: list[int],
) -> np.ndarray:
    """Heat capacity over a J grid, one column per seed; rows align with
    j_values."""
    out = np.empty((len(j_values), len(seeds)))
    for a, j in enumerate(j_values):
        for b, seed in enumerate(seeds):
            cfg = replace(cfg_template, j_coupling=float(j), rng_seed=int(seed))
            out[a, b] = simulate_heat_capacity(cfg)
    return out
