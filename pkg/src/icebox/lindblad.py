"""Dissipative cavity dynamics: Markov master equation plus the three-level
reduced model with its closed-form solution.

Master equation (hbar = 1):

    drho/dt = -i [H, rho] - kappa (bdag b rho + rho bdag b - 2 b rho bdag)

Only the cavity dissipates; the qubits carry no channels of their own.  The
commutator is evaluated with the sparse Hamiltonian and the jump terms act
directly on the Fock indices of rho reshaped to (spin, fock, spin, fock), so
no superoperator matrix is ever materialized.

Three-level model: states |2> = |up, 0>, |1> = |down, 1>, |0> = |down, 0>
with resonant coupling lam between |2> and |1> and cavity decay kappa out of
|1>.  The rotating-wave equations have the closed-form solution

    rho22(t) = e^{-kappa t} [ lam^2/(2 W^2) (1 + cos 2Wt)
                              - kappa^2/(4 W^2) cos 2Wt
                              + kappa/(2 W) sin 2Wt ],
    W = sqrt(lam^2 - kappa^2 / 4),

derived by solving the cubic characteristic polynomial (s + kappa)
(s^2 + 2 kappa s + 4 lam^2) of the coupled system with rho22(0) = 1.  Note
the sin coefficient kappa/(2W): the small-kappa expansion P_sg ~ sin^2(lam t)
+ kappa [t cos^2(lam t) - sin(2 lam t)/(2 lam)] and the overdamped limit
P_sg -> 1 - exp(-2 lam^2 t / kappa) both follow from it, and direct
integration of the equations of motion confirms it (see the tests).  For
lam < kappa/2 the analytic continuation W -> i|W| turns the trig functions
hyperbolic; the expression stays real and is continuous at lam = kappa/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quantum import DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL, _write_csv
from .hamiltonian import SpinGlass, all_spin_energies

__all__ = [
    "DensityMatrix",
    "DensityTrajectory",
    "PositivityError",
    "evolve_master",
    "three_level_analytic",
    "three_level_numeric",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_SLACK = 1e-7


class PositivityError(RuntimeError):
    """Density matrix developed a negative eigenvalue beyond the slack."""


@dataclass
class DensityMatrix:
    """Validated Hermitian, unit-trace operator on the composite space."""

    matrix: np.ndarray
    n_s: int
    n_max: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.complex128)
        dim = (1 << self.n_s) * (self.n_max + 1)
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"density matrix must be {dim}x{dim}")
        herm = np.abs(self.matrix - self.matrix.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise ValueError(f"not Hermitian: max |rho - rho^+| = {herm:.3e}")
        tr = np.trace(self.matrix).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {tr}, expected 1")
        w = np.linalg.eigvalsh(self.matrix)
        if w.min() < -POSITIVITY_SLACK:
            raise ValueError(f"negative eigenvalue {w.min():.3e}")

    @classmethod
    def from_pure(cls, amplitudes: np.ndarray, n_s: int, n_max: int) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=np.complex128)
        return cls(np.outer(psi, psi.conj()), n_s, n_max)


@dataclass
class DensityTrajectory:
    """Sampled statistics of a master-equation run."""

    times: np.ndarray
    ground_prob: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    mean_photons: np.ndarray
    final_matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.ground_prob, self.trace,
                                self.min_eigenvalue, self.mean_photons])
        _write_csv(path, ["t", "P_g", "trace", "min_eig", "n_mean"], data)


def evolve_master(
    h: sp.csr_matrix,
    kappa: float,
    rho0: DensityMatrix,
    t_final: float,
    dt: float = DEFAULT_DT,
    *,
    spin_glass: SpinGlass,
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL,
) -> DensityTrajectory:
    """Integrate the cavity-damped master equation with fixed-step RK4.

    Trace is preserved identically by the right-hand side (the commutator
    and jump terms are each traceless for any matrix, so every RK4 stage
    conserves it to round-off).  Hermiticity is likewise preserved exactly;
    positivity is monitored at sample times against the numerical slack.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    nf = rho0.n_max + 1
    dim = rho0.matrix.shape[0]
    if h.shape != (dim, dim):
        raise ValueError("Hamiltonian does not match the density matrix")
    hs = h.tocsr()
    ns = np.arange(nf, dtype=np.float64)
    sqrt_n = np.sqrt(ns[1:])  # <n-1| b |n>

    energies = all_spin_energies(spin_glass)
    gmask = energies == energies.min()

    def rhs(rho):
        # -i [H, rho]; rho H computed via the Hermitian-transpose trick
        hrho = hs.dot(rho)
        rhoh = hs.dot(rho.conj().T).conj().T
        out = -1j * (hrho - rhoh)
        if kappa:
            r4 = rho.reshape(-1, nf, rho.shape[0] // nf, nf)
            d4 = np.zeros_like(r4)
            # -kappa (N rho + rho N), N = bdag b diagonal on each Fock index
            d4 -= ns[None, :, None, None] * r4
            d4 -= ns[None, None, None, :] * r4
            # +2 kappa b rho bdag: shift both Fock indices down
            d4[:, :-1, :, :-1] += 2.0 * (sqrt_n[None, :, None, None]
                                         * sqrt_n[None, None, None, :]
                                         * r4[:, 1:, :, 1:])
            out += kappa * d4.reshape(rho.shape)
        return out

    n_steps = max(1, int(round(t_final / dt)))
    sample_every = max(1, int(round(sample_interval / dt)))

    rho = rho0.matrix.copy()
    records = []
    steps_at = []

    def sample(step, cur):
        pops = np.diag(cur).real.reshape(-1, nf)
        tr = pops.sum()
        w_min = float(np.linalg.eigvalsh(cur).min())
        if w_min < -POSITIVITY_SLACK:
            raise PositivityError(
                f"min eigenvalue {w_min:.3e} beyond slack at t={step * dt:.3g}")
        records.append({
            "P_g": float(pops[gmask, :].sum()),
            "trace": float(tr),
            "min_eig": w_min,
            "n_mean": float((pops * ns[None, :]).sum()),
        })
        steps_at.append(step)

    sample(0, rho)
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + half * k1)
        k3 = rhs(rho + half * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        if step % sample_every == 0 or step == n_steps:
            sample(step, rho)

    return DensityTrajectory(
        times=np.array(steps_at) * dt,
        ground_prob=np.array([r["P_g"] for r in records]),
        trace=np.array([r["trace"] for r in records]),
        min_eigenvalue=np.array([r["min_eig"] for r in records]),
        mean_photons=np.array([r["n_mean"] for r in records]),
        final_matrix=rho,
        meta={"kappa": kappa, "dt": dt},
    )


def three_level_analytic(lam: float, kappa: float, t) -> np.ndarray:
    """Closed-form rho22(t) of the damped two-level + cavity reduced model.

    Valid for every kappa >= 0: below the critical damping the motion is a
    damped oscillation at frequency 2W; above it the analytic continuation
    gives real combinations of hyperbolic functions.  P_sg = 1 - rho22.
    """
    t = np.asarray(t, dtype=np.float64)
    if lam == 0.0:
        return np.exp(-kappa * t) * np.ones_like(t)
    w2 = complex(lam * lam - 0.25 * kappa * kappa)
    w = np.sqrt(w2)
    if w == 0:
        # critical damping, W -> 0 limit of the closed form
        return np.exp(-kappa * t) * (1.0 + kappa * t + 0.25 * (kappa * t) ** 2)
    phase = 2.0 * w * t
    val = (lam * lam / (2.0 * w2) * (1.0 + np.cos(phase))
           - kappa * kappa / (4.0 * w2) * np.cos(phase)
           + kappa / (2.0 * w) * np.sin(phase))
    return np.exp(-kappa * t) * np.real(val)


def three_level_numeric(lam: float, kappa: float, t_final: float,
                        dt: float = 1e-3) -> dict:
    """Direct RK4 integration of the four coupled rotating-wave equations.

        drho22/dt = i lam (rho12 - rho21)
        drho12/dt = i lam (rho22 - rho11) - kappa rho12
        drho11/dt = -i lam (rho12 - rho21) - 2 kappa rho11
        drho00/dt = 2 kappa rho11

    Initial condition rho22 = 1.  Returns sampled times and populations.
    """
    def rhs(y):
        r22, r12, r11, r00 = y
        d22 = 1j * lam * (r12 - np.conj(r12))
        d12 = 1j * lam * (r22 - r11) - kappa * r12
        d11 = -1j * lam * (r12 - np.conj(r12)) - 2.0 * kappa * r11
        d00 = 2.0 * kappa * r11
        return np.array([d22, d12, d11, d00])

    n_steps = max(1, int(round(t_final / dt)))
    y = np.array([1.0 + 0j, 0j, 0j, 0j])
    times = [0.0]
    rows = [y.copy()]
    half, sixth = 0.5 * dt, dt / 6.0
    for step in range(1, n_steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + half * k1)
        k3 = rhs(y + half * k2)
        k4 = rhs(y + dt * k3)
        y = y + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        times.append(step * dt)
        rows.append(y.copy())
    arr = np.array(rows)
    return {
        "times": np.array(times),
        "rho22": arr[:, 0].real,
        "rho12": arr[:, 1],
        "rho11": arr[:, 2].real,
        "rho00": arr[:, 3].real,
    }
