"""Hybrid optimization loop: classical descent alternating with quantum
cooling, plus the two-minima benchmark instance used for the cooling-curve
comparisons.

Loop structure per round: descend to a local minimum s1, cool the composite
system from |s1> x |0> for t_cool, measure the spin register, descend the
outcome to s3, and accept s3 iff its energy does not exceed s1's (lateral
moves between degenerate minima are allowed).  The bath is discarded and
re-prepared in its ground state at every invocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import (
    ConfigError,
    ProblemInstance,
    SpinGlass,
    all_spin_energies,
    local_minima,
    spin_config_bits,
    spin_energy,
)
from .quantum import DEFAULT_DT, CompositeState, Trajectory, cool

__all__ = [
    "HybridConfig",
    "IterationRecord",
    "HybridTrace",
    "classical_descent",
    "measure",
    "run_hybrid",
    "build_two_minima_instance",
]


@dataclass(frozen=True)
class HybridConfig:
    """Loop parameters; the underlying scheme leaves all of them open, so the
    defaults are package choices (t_cool = 20 per invocation, lam = 0.2)."""

    lam: float = 0.2
    t_cool: float = 20.0
    max_iterations: int = 50
    stop_energy: float | None = None  # None -> exhaustive global minimum
    seed: int = 0
    dt: float = DEFAULT_DT
    n_max: int | None = None

    def __post_init__(self):
        if self.t_cool <= 0:
            raise ConfigError("t_cool must be positive")
        if self.max_iterations < 1:
            raise ConfigError("need at least one iteration")


@dataclass
class IterationRecord:
    iteration: int
    config_s1: int
    energy_s1: float
    config_s2: int | None
    config_s3: int | None
    energy_s3: float | None
    accepted: bool


@dataclass
class HybridTrace:
    n_s: int
    records: list[IterationRecord]
    final_config: int
    final_energy: float
    reached_threshold: bool
    iterations_used: int
    meta: dict = field(default_factory=dict)

    def accepted_energies(self) -> np.ndarray:
        return np.array([r.energy_s1 for r in self.records])

    def to_csv(self, path) -> None:
        width = (self.n_s + 3) // 4
        with open(path, "w") as fh:
            fh.write("iter,E_s1,config_s1,config_s2,E_s3,accepted\n")
            for r in self.records:
                s2 = f"{r.config_s2:0{width}x}" if r.config_s2 is not None else ""
                e3 = f"{r.energy_s3:.17g}" if r.energy_s3 is not None else ""
                fh.write(f"{r.iteration},{r.energy_s1:.17g},"
                         f"{r.config_s1:0{width}x},{s2},{e3},"
                         f"{int(r.accepted)}\n")


def classical_descent(sg: SpinGlass, config) -> int:
    """Greedy steepest single-flip descent; among equally good flips the
    lowest qubit index wins; stops when no flip strictly lowers the energy."""
    k = spin_config_bits(config, sg.n_s)
    # local field h_m = J1_m + sum_j J_mj s_j gives the flip cost -2 s_m h_m
    on_site = np.asarray(sg.on_site, dtype=np.float64)
    while True:
        s = 1.0 - 2.0 * ((k >> np.arange(sg.n_s)) & 1)
        h = on_site.copy()
        for m, mp, j in sg.edges:
            h[m] += j * s[mp]
            h[mp] += j * s[m]
        deltas = -2.0 * s * h
        best = int(np.argmin(deltas))
        if deltas[best] >= 0.0:
            return k
        k ^= 1 << best


def measure(state: CompositeState, rng: np.random.Generator) -> int:
    """Computational-basis measurement of the spin register: samples one
    configuration with its Fock-marginalized Born probability."""
    marg = (np.abs(state.as_matrix()) ** 2).sum(axis=1)
    marg = marg / marg.sum()
    return int(rng.choice(marg.size, p=marg))


def run_hybrid(instance: ProblemInstance, cfg: HybridConfig) -> HybridTrace:
    """Execute the full loop.  Deterministic given (instance, cfg.seed).

    The accepted-energy sequence never increases (acceptance rule); the run
    stops once the accepted energy reaches the stop threshold or the
    iteration budget is exhausted (a normal, flagged outcome).
    """
    sg = instance.spin_glass
    if cfg.stop_energy is None:
        if sg.n_s > 20:
            raise ConfigError(
                "no stop threshold given and instance too large for an "
                "exhaustive scan; supply stop_energy")
        threshold = float(all_spin_energies(sg).min())
    else:
        threshold = cfg.stop_energy

    rng = np.random.default_rng(cfg.seed)
    start = int(rng.integers(0, sg.n_configs))
    s1 = classical_descent(sg, start)
    e1 = spin_energy(sg, s1)

    records: list[IterationRecord] = []
    reached = False
    n_max = cfg.n_max
    for it in range(1, cfg.max_iterations + 1):
        if e1 <= threshold:
            records.append(IterationRecord(it, s1, e1, None, None, None, True))
            reached = True
            break
        traj: Trajectory = cool(sg, cfg.lam, cfg.t_cool, config=s1,
                                dt=cfg.dt, n_max=n_max)
        n_max = traj.n_max  # reuse a truncation that worked
        s2 = measure(traj.final_state, rng)
        s3 = classical_descent(sg, s2)
        e3 = spin_energy(sg, s3)
        accepted = e3 <= e1
        records.append(IterationRecord(it, s1, e1, s2, s3, e3, accepted))
        if accepted:
            s1, e1 = s3, e3
    else:
        reached = e1 <= threshold

    return HybridTrace(
        n_s=sg.n_s,
        records=records,
        final_config=s1,
        final_energy=e1,
        reached_threshold=reached,
        iterations_used=len(records),
        meta={"threshold": threshold, "start_config": start,
              "lam": cfg.lam, "t_cool": cfg.t_cool, "seed": cfg.seed},
    )


def build_two_minima_instance(n_s: int, hamming_gap: int) -> ProblemInstance:
    """Spin glass with exactly two strict local minima a prescribed Hamming
    distance apart, the higher one marked as the initial state.

    Construction: one ferromagnetic chain split into a head cluster A of
    ``hamming_gap`` qubits and a tail cluster B, with on-site fields chosen
    so that (A up, B down) is a strict local minimum and all-down is the
    strict global minimum.  The two minima differ exactly by flipping A.
    The energy split is 1 for odd gaps and 2 for even gaps: total-parity
    conservation only permits resonant relaxation when the split has the
    same parity as the number of flipped spins.

    Verified exhaustively before returning; raises ConfigError when the
    requested geometry is impossible (gap 1 cannot support two strict
    minima: each would be the other's downhill neighbor).
    """
    g = hamming_gap
    if not 1 <= g <= n_s:
        raise ConfigError(f"hamming_gap must be in [1, {n_s}]")
    if g == 1:
        raise ConfigError(
            "two strict minima at Hamming distance 1 are impossible: "
            "flipping the one differing spin from the higher minimum "
            "would descend directly to the lower one")
    if n_s < 3:
        raise ConfigError("need n_s >= 3")
    if n_s > 20:
        raise ConfigError("exhaustive verification limited to n_s <= 20")

    on_site = [0.0] * n_s
    edges: list[tuple[int, int, float]] = []
    if g == n_s:
        # single ferromagnetic chain; interior fields split the aligned pair
        edges = [(i, i + 1, -0.5) for i in range(n_s - 1)]
        for q in ([1] if g % 2 == 1 else [1, 2]):
            on_site[q] = 0.5
    elif g == 2:
        # no interior qubit in A: stiffen the A bond instead
        edges = [(0, 1, -1.0)] + [(i, i + 1, -0.5) for i in range(1, n_s - 1)]
        on_site[0] = 0.5
        if n_s - g == 1:
            on_site[2] = 1.0
        else:
            on_site[2] = 0.5
            on_site[n_s - 1] = 0.5
    else:
        edges = [(i, i + 1, -0.5) for i in range(n_s - 1)]
        on_site[g - 1] = -0.5  # stabilizes the boundary qubit of A
        n_interior = 1 if g % 2 == 1 else 2
        for q in range(1, 1 + n_interior):
            on_site[q] = 0.5
        if n_s - g == 1:
            on_site[g] = 1.0
        else:
            on_site[g] = 0.5
            on_site[n_s - 1] = 0.5

    sg = SpinGlass(n_s=n_s, on_site=tuple(on_site), edges=tuple(edges))
    initial = sum(1 << i for i in range(g, n_s))  # A up (bits 0), B down
    glob = (1 << n_s) - 1

    minima = local_minima(sg)
    energies = all_spin_energies(sg)
    ok = (
        len(minima) == 2
        and set(minima) == {initial, glob}
        and energies[initial] > energies[glob]
        and bin(initial ^ glob).count("1") == g
    )
    if not ok:
        raise ConfigError(
            f"two-minima construction failed for n_s={n_s}, gap={g}: "
            f"minima={minima}")
    gap_energy = float(energies[initial] - energies[glob])
    meta = {
        "generator": "two-minima-chain",
        "hamming_gap": g,
        "initial_config": initial,
        "global_config": glob,
        "energy_split": gap_energy,
    }
    return ProblemInstance(spin_glass=sg, seed=0, metadata=meta)
