"""Semiclassical comparison: quantum spins coupled to a classical oscillator.

Dimensionless reduction of the canonical mean-field equations (hbar = 1,
omega_b = 1), derived by substituting q = Q / sqrt(2 hbar omega_b C_b) and
phi = Phi * sqrt(omega_b C_b / (2 hbar)) into the coupled charge/flux
equations and verified against the Heisenberg equations of motion of the
quantum model:

    i dpsi/dt = (H_s + 2 lam q sum_m sigma_y^m) psi
    dq/dt    = -omega_b phi
    dphi/dt  = +omega_b q + lam * <sum_m sigma_y^m>

The back-action coefficient is lam (not 2 lam): with 2 lam the conserved
energy E = <H_s> + omega_b (q^2 + phi^2) + 2 lam q <sum sigma_y> would drift
linearly, and the quantum Heisenberg equation dphi/dt = omega q + lam <sum
sigma_y> fixes the factor.  The hardware constants C_b, L_b drop out
entirely; only omega_b and lam survive.

The initial bath ensemble is the ground-state phase-space density
rho_c = exp(-(q^2 + phi^2)) / pi, i.e. q and phi i.i.d. normal with mean 0
and variance 1/2.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hamiltonian import SpinGlass, all_spin_energies, spin_config_bits, spin_energy
from .quantum import DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL, _write_csv, popcount

__all__ = [
    "ClassicalBathState",
    "SemiclassicalTrajectory",
    "EnsembleResult",
    "TrajectoryDiverged",
    "sample_initial",
    "sigma_y_total",
    "evolve_semiclassical",
    "ensemble_average",
]

DIVERGENCE_BOUND = 1e3
OMEGA_B = 1.0


class TrajectoryDiverged(RuntimeError):
    """Classical bath coordinates left the sane region."""


@dataclass(frozen=True)
class ClassicalBathState:
    """Dimensionless phase-space point of the classical cavity."""

    q: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.q) and np.isfinite(self.phi)):
            raise ValueError("bath coordinates must be finite")


def sample_initial(rng: np.random.Generator) -> ClassicalBathState:
    """Draw (q, phi) from the cavity ground-state density e^{-(q^2+phi^2)}/pi."""
    q, phi = rng.normal(0.0, np.sqrt(0.5), size=2)
    return ClassicalBathState(q=float(q), phi=float(phi))


def sigma_y_total(n_s: int) -> sp.csr_matrix:
    """Sparse sum_m sigma_y^m on the spin space (bit 0 = up)."""
    dim = 1 << n_s
    ks = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for m in range(n_s):
        bit = (ks >> m) & 1
        # <j|sigma_y|j^m>: +i into the bit=1 row, -i into the bit=0 row
        rows.append(ks)
        cols.append(ks ^ (1 << m))
        vals.append(np.where(bit == 1, 1j, -1j))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()


@dataclass
class SemiclassicalTrajectory:
    """One sampled initial condition: spin observables plus the bath path."""

    n_s: int
    ref_config: int
    times: np.ndarray
    ground_prob: np.ndarray
    lower_prob: np.ndarray
    hamming: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    bath_q: np.ndarray
    bath_phi: np.ndarray
    final_spin_state: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class EnsembleResult:
    """Gaussian-ensemble average over independent semiclassical trajectories."""

    n_s: int
    n_samples: int
    seed: int
    aborts: int
    times: np.ndarray
    ground_prob: np.ndarray
    ground_prob_stderr: np.ndarray
    lower_prob: np.ndarray
    lower_prob_stderr: np.ndarray
    hamming: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        header = ["t", "P_g", "P_lower", "energy", "norm"]
        header += [f"h{i}" for i in range(self.n_s + 1)]
        header += ["stderr_P_g", "stderr_P_lower"]
        data = np.column_stack([
            self.times, self.ground_prob, self.lower_prob, self.energy,
            self.norm, self.hamming, self.ground_prob_stderr,
            self.lower_prob_stderr,
        ])
        _write_csv(path, header, data)

    def metadata(self) -> dict:
        return {"M": self.n_samples, "seed": self.seed, "aborts": self.aborts}


def _as_spin_vector(psi_s0, n_s: int) -> np.ndarray:
    if isinstance(psi_s0, (int, np.integer, str)):
        k = spin_config_bits(psi_s0, n_s)
        psi = np.zeros(1 << n_s, dtype=np.complex128)
        psi[k] = 1.0
        return psi
    psi = np.asarray(psi_s0, dtype=np.complex128)
    if psi.shape != (1 << n_s,):
        raise ValueError("spin state has wrong dimension")
    return psi


def evolve_semiclassical(
    sg: SpinGlass,
    lam: float,
    psi_s0,
    bath0: ClassicalBathState,
    t_final: float,
    dt: float = DEFAULT_DT,
    *,
    ref_config: int | None = None,
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL,
) -> SemiclassicalTrajectory:
    """Integrate the coupled spin-state + (q, phi) equations with RK4.

    The spin state stays pure (no entanglement can form with a classical
    coordinate); energy <H_s> + omega (q^2 + phi^2) + 2 lam q <sum sigma_y>
    is conserved and recorded as a diagnostic.
    """
    psi = _as_spin_vector(psi_s0, sg.n_s)
    dim = psi.size
    if ref_config is None:
        ref_config = int(np.argmax(np.abs(psi) ** 2))
    e_ref = spin_energy(sg, ref_config)
    energies = all_spin_energies(sg)
    gmask = energies == energies.min()
    lmask = energies < e_ref
    hbins = popcount(np.arange(dim) ^ ref_config)

    sy = sigma_y_total(sg.n_s)
    e0 = float(np.vdot(psi, energies * psi).real)
    hs_shifted = energies - e0

    n_steps = max(1, int(round(t_final / dt)))
    sample_every = max(1, int(round(sample_interval / dt)))

    # state packing: y[:dim] spins, y[dim] = q, y[dim+1] = phi (real parts)
    y = np.empty(dim + 2, dtype=np.complex128)
    y[:dim] = psi
    y[dim] = bath0.q
    y[dim + 1] = bath0.phi

    def deriv(yv):
        ps = yv[:dim]
        qb = yv[dim].real
        ph = yv[dim + 1].real
        sy_ps = sy.dot(ps)
        out = np.empty_like(yv)
        out[:dim] = -1j * (hs_shifted * ps + (2.0 * lam * qb) * sy_ps)
        exp_sy = np.vdot(ps, sy_ps).real
        out[dim] = -OMEGA_B * ph
        out[dim + 1] = OMEGA_B * qb + lam * exp_sy
        return out

    records = []
    steps_at = []

    def sample(step, yv):
        ps = yv[:dim]
        qb = yv[dim].real
        ph = yv[dim + 1].real
        if abs(qb) > DIVERGENCE_BOUND or abs(ph) > DIVERGENCE_BOUND:
            raise TrajectoryDiverged(
                f"bath coordinates diverged at t={step * dt:.3g}: "
                f"q={qb:.3g}, phi={ph:.3g}")
        probs = ps.real ** 2 + ps.imag ** 2
        sy_ps = sy.dot(ps)
        exp_sy = np.vdot(ps, sy_ps).real
        energy = float(np.dot(energies, probs)
                       + OMEGA_B * (qb ** 2 + ph ** 2)
                       + 2.0 * lam * qb * exp_sy)
        records.append({
            "P_g": float(probs[gmask].sum()),
            "P_lower": float(probs[lmask].sum()),
            "hamming": np.bincount(hbins, weights=probs, minlength=sg.n_s + 1),
            "energy": energy,
            "norm": float(np.linalg.norm(ps)),
            "q": qb,
            "phi": ph,
        })
        steps_at.append(step)

    sample(0, y)
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(1, n_steps + 1):
        k1 = deriv(y)
        k2 = deriv(y + half * k1)
        k3 = deriv(y + half * k2)
        k4 = deriv(y + dt * k3)
        y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if step % sample_every == 0 or step == n_steps:
            sample(step, y)

    times = np.array(steps_at) * dt
    phase = np.exp(-1j * e0 * n_steps * dt)
    return SemiclassicalTrajectory(
        n_s=sg.n_s,
        ref_config=ref_config,
        times=times,
        ground_prob=np.array([r["P_g"] for r in records]),
        lower_prob=np.array([r["P_lower"] for r in records]),
        hamming=np.vstack([r["hamming"] for r in records]),
        energy=np.array([r["energy"] for r in records]),
        norm=np.array([r["norm"] for r in records]),
        bath_q=np.array([r["q"] for r in records]),
        bath_phi=np.array([r["phi"] for r in records]),
        final_spin_state=y[:dim] * phase,
        meta={"dt": dt, "lam": lam, "bath0": (bath0.q, bath0.phi),
              "e_ref": e_ref},
    )


def _trajectory_job(args):
    (sg, lam, psi_bytes, n_s, index, seed, t_final, dt, ref_config,
     sample_interval) = args
    psi = np.frombuffer(psi_bytes, dtype=np.complex128).copy()
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(index + 1)[-1])
    bath0 = sample_initial(rng)
    try:
        traj = evolve_semiclassical(
            sg, lam, psi, bath0, t_final, dt,
            ref_config=ref_config, sample_interval=sample_interval)
    except TrajectoryDiverged:
        return index, None
    return index, (traj.times, traj.ground_prob, traj.lower_prob,
                   traj.hamming, traj.energy, traj.norm)


def ensemble_average(
    sg: SpinGlass,
    lam: float,
    psi_s0,
    n_samples: int,
    t_final: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    *,
    ref_config: int | None = None,
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL,
    workers: int = 1,
) -> EnsembleResult:
    """Average independent semiclassical trajectories over the Gaussian
    initial bath ensemble.

    Per-trajectory RNG streams derive from (seed, index), so results are
    deterministic and independent of worker scheduling.  Diverged
    trajectories are excluded and counted; more than 1% aborts fails the run.
    """
    if n_samples < 1:
        raise ValueError("need at least one trajectory")
    psi = _as_spin_vector(psi_s0, sg.n_s)
    if ref_config is None:
        ref_config = int(np.argmax(np.abs(psi) ** 2))
    jobs = [
        (sg, lam, psi.tobytes(), sg.n_s, i, seed, t_final, dt, ref_config,
         sample_interval)
        for i in range(n_samples)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trajectory_job, jobs,
                                    chunksize=max(1, n_samples // (4 * workers))))
    else:
        results = [_trajectory_job(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    kept = [payload for _, payload in results if payload is not None]
    aborts = n_samples - len(kept)
    if aborts > 0.01 * n_samples:
        raise TrajectoryDiverged(
            f"{aborts}/{n_samples} trajectories diverged; run rejected")
    times = kept[0][0]
    pg = np.vstack([k[1] for k in kept])
    pl = np.vstack([k[2] for k in kept])
    ham = np.stack([k[3] for k in kept])
    en = np.vstack([k[4] for k in kept])
    nrm = np.vstack([k[5] for k in kept])
    m = len(kept)
    sq = np.sqrt(m)
    return EnsembleResult(
        n_s=sg.n_s,
        n_samples=m,
        seed=seed,
        aborts=aborts,
        times=times,
        ground_prob=pg.mean(axis=0),
        ground_prob_stderr=pg.std(axis=0, ddof=1) / sq if m > 1 else np.zeros_like(times),
        lower_prob=pl.mean(axis=0),
        lower_prob_stderr=pl.std(axis=0, ddof=1) / sq if m > 1 else np.zeros_like(times),
        hamming=ham.mean(axis=0),
        energy=en.mean(axis=0),
        norm=nrm.mean(axis=0),
        meta={"lam": lam, "dt": dt, "ref_config": ref_config},
    )
