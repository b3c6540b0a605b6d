"""Schrodinger-picture dynamics of the composite spin-cavity state.

The integrator is a fixed-step classical RK4 on the full complex amplitude
vector.  The generator is shifted by the (conserved) initial mean energy,
H -> H - E0, which changes the state only by the exact global phase
exp(-i E0 t); that phase is restored on every state handed back.  The shift
keeps the RK4 amplitude error driven by the spectral spread around E0 rather
than by absolute eigenvalues, which is what makes the tight norm/parity
conservation targets reachable without renormalizing (norm drift stays a
genuine error diagnostic).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._integrate import rk4_linear_run
from .hamiltonian import (
    BathSpec,
    SpinGlass,
    all_spin_energies,
    parity_phases,
    spin_config_bits,
    spin_energy,
)

__all__ = [
    "CompositeState",
    "Trajectory",
    "TruncationError",
    "initial_state",
    "evolve",
    "propagate_dense",
    "ground_state_probability",
    "lower_energy_probability",
    "hamming_distribution",
    "fock_distribution",
    "entanglement_entropy",
    "joint_correlation",
    "low_eigenstate_localization",
]

DEFAULT_DT = 0.002
DEFAULT_SAMPLE_INTERVAL = 0.05
TRUNCATION_TOL = 1e-6

_POP16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.int64)


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return _POP16[x & 0xFFFF] + _POP16[(x >> 16) & 0xFFFF]


class TruncationError(RuntimeError):
    """Fock truncation level acquired non-negligible population."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class CompositeState:
    """Complex amplitudes over (spin config) x (Fock level), spin-major."""

    amplitudes: np.ndarray
    n_s: int
    n_max: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        expected = (1 << self.n_s) * (self.n_max + 1)
        if self.amplitudes.shape != (expected,):
            raise ValueError(
                f"amplitude vector has length {self.amplitudes.shape}, expected {expected}"
            )

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def as_matrix(self) -> np.ndarray:
        """View as (2**n_s, n_max+1): rows spin configs, columns Fock levels."""
        return self.amplitudes.reshape(1 << self.n_s, self.n_max + 1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class Trajectory:
    """Sampled observables of a single evolution run."""

    n_s: int
    n_max: int
    ref_config: int
    times: np.ndarray
    ground_prob: np.ndarray
    lower_prob: np.ndarray
    entropy: np.ndarray
    correlation: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    parity: np.ndarray  # complex
    hamming: np.ndarray  # (n_times, n_s + 1)
    fock: np.ndarray  # (n_times, n_max + 1)
    final_state: CompositeState
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        header = ["t", "P_g", "P_lower", "S", "C", "energy", "norm",
                  "parity_re", "parity_im"]
        header += [f"h{i}" for i in range(self.n_s + 1)]
        header += [f"n{i}" for i in range(self.n_max + 1)]
        cols = [self.times, self.ground_prob, self.lower_prob, self.entropy,
                self.correlation, self.energy, self.norm,
                self.parity.real, self.parity.imag]
        data = np.column_stack(cols + [self.hamming, self.fock])
        _write_csv(path, header, data)


def _write_csv(path, header, data) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def initial_state(sg: SpinGlass, config, bath: BathSpec) -> CompositeState:
    """Product state |config> x |n=0>."""
    k = spin_config_bits(config, sg.n_s)
    amps = np.zeros(sg.n_configs * bath.dim, dtype=np.complex128)
    amps[k * bath.dim] = 1.0
    return CompositeState(amps, sg.n_s, bath.n_max)


class _Observables:
    """Precomputed index machinery for fast per-sample observables."""

    def __init__(self, sg: SpinGlass, n_max: int, ref_config: int, e_ref: float):
        self.n_s = sg.n_s
        self.n_max = n_max
        energies = all_spin_energies(sg)
        ground = energies.min()
        self.ground_mask = energies == ground
        self.lower_mask = energies < e_ref
        ks = np.arange(sg.n_configs)
        self.hamming_bins = popcount(ks ^ ref_config)
        self.parity_diag = parity_phases(sg.n_s, n_max)

    def measure(self, psi: np.ndarray, h: sp.csr_matrix) -> dict:
        probs = (psi.real ** 2 + psi.imag ** 2).reshape(-1, self.n_max + 1)
        spin_marg = probs.sum(axis=1)
        fock_marg = probs.sum(axis=0)
        p_bath0 = fock_marg[0]
        p_g = float(spin_marg[self.ground_mask].sum())
        joint = float(probs[self.ground_mask, 0].sum())
        ham = np.bincount(self.hamming_bins, weights=spin_marg,
                          minlength=self.n_s + 1)
        svals = np.linalg.svd(psi.reshape(-1, self.n_max + 1),
                              compute_uv=False)
        lam = svals ** 2
        lam = lam[lam > 1e-300]
        return {
            "P_g": p_g,
            "P_lower": float(spin_marg[self.lower_mask].sum()),
            "S": float(-np.sum(lam * np.log(lam))),
            "C": float(-joint + p_g * p_bath0),
            "energy": float(np.vdot(psi, h.dot(psi)).real),
            "norm": float(np.linalg.norm(psi)),
            "parity": complex(np.dot(self.parity_diag, probs.ravel())),
            "hamming": ham,
            "fock": fock_marg.copy(),
        }


def evolve(
    h: sp.csr_matrix,
    psi0: CompositeState,
    t_final: float,
    dt: float = DEFAULT_DT,
    *,
    spin_glass: SpinGlass,
    ref_config: int | None = None,
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL,
    check_truncation: bool = True,
) -> Trajectory:
    """Integrate i dpsi/dt = H psi and record observables.

    ``ref_config`` anchors the Hamming histogram and the lower-energy
    reference; it defaults to the dominant spin configuration of psi0.
    Raises :class:`TruncationError` (trajectory attached) if the top Fock
    level ever exceeds the truncation tolerance.
    """
    psi = psi0.amplitudes.copy()
    dim = psi.size
    if h.shape != (dim, dim):
        raise ValueError("Hamiltonian dimension does not match the state")
    n_steps = max(1, int(round(t_final / dt)))
    sample_every = max(1, int(round(sample_interval / dt)))

    if ref_config is None:
        marg = np.abs(psi0.as_matrix()) ** 2
        ref_config = int(np.argmax(marg.sum(axis=1)))
    e_ref = spin_energy(spin_glass, ref_config)
    obs = _Observables(spin_glass, psi0.n_max, ref_config, e_ref)

    e0 = float(np.vdot(psi, h.dot(psi)).real)
    gen = (h - sp.identity(dim, dtype=np.complex128, format="csr") * e0).tocsr()
    gen.data = (-1j * dt) * gen.data  # fold dt into the generator

    records: list[dict] = []
    steps_at: list[int] = []

    def on_sample(step, cur):
        rec = obs.measure(cur, h)
        records.append(rec)
        steps_at.append(step)
        if check_truncation and rec["fock"][-1] > TRUNCATION_TOL:
            raise TruncationError(
                f"population {rec['fock'][-1]:.3e} reached the Fock "
                f"truncation level n_max={psi0.n_max} at t={step * dt:.3g}; "
                f"rerun with a larger n_max"
            )

    psi = rk4_linear_run(gen.dot, psi, n_steps, sample_every, on_sample)

    times = np.array(steps_at) * dt
    final = CompositeState(psi * np.exp(-1j * e0 * n_steps * dt),
                           psi0.n_s, psi0.n_max)
    traj = Trajectory(
        n_s=psi0.n_s,
        n_max=psi0.n_max,
        ref_config=ref_config,
        times=times,
        ground_prob=np.array([r["P_g"] for r in records]),
        lower_prob=np.array([r["P_lower"] for r in records]),
        entropy=np.array([r["S"] for r in records]),
        correlation=np.array([r["C"] for r in records]),
        energy=np.array([r["energy"] for r in records]),
        norm=np.array([r["norm"] for r in records]),
        parity=np.array([r["parity"] for r in records]),
        hamming=np.vstack([r["hamming"] for r in records]),
        fock=np.vstack([r["fock"] for r in records]),
        final_state=final,
        meta={"dt": dt, "t_final": t_final, "energy_shift": e0,
              "e_ref": e_ref},
    )
    return traj


def cool(
    sg: SpinGlass,
    lam: float,
    t_final: float,
    *,
    config,
    dt: float = DEFAULT_DT,
    n_max: int | None = None,
    sample_interval: float = DEFAULT_SAMPLE_INTERVAL,
    max_attempts: int = 6,
) -> Trajectory:
    """Build the composite Hamiltonian and run one cooling evolution from the
    product state |config> x |0>, growing the Fock truncation until the
    top-level population stays below tolerance.  Strong coupling displaces
    the oscillator to <n> ~ (lam * n_s)^2, so retries can be substantial.
    """
    from .hamiltonian import CouplingSpec, build_total, default_n_max

    nm = default_n_max(sg) if n_max is None else n_max
    last_exc = None
    for _ in range(max_attempts):
        bath = BathSpec(n_max=nm)
        h = build_total(sg, bath, CouplingSpec(lam))
        psi0 = initial_state(sg, config, bath)
        try:
            return evolve(h, psi0, t_final, dt, spin_glass=sg,
                          sample_interval=sample_interval)
        except TruncationError as exc:
            last_exc = exc
            nm = int(np.ceil(nm * 1.5)) + 2
    raise TruncationError(
        f"Fock truncation still violated at n_max={nm}: {last_exc}")


def propagate_dense(h, psi0: np.ndarray, t: float) -> np.ndarray:
    """Reference propagator exp(-i H t) psi0 via dense eigendecomposition.

    Test oracle only; refuses dimensions above 4096.
    """
    dim = psi0.size
    if dim > 4096:
        raise ValueError("dense oracle limited to dimension <= 4096")
    hd = h.toarray() if sp.issparse(h) else np.asarray(h)
    w, v = np.linalg.eigh(hd)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi0))


def ground_state_probability(state: CompositeState, sg: SpinGlass) -> float:
    """Total probability on global-minimum spin configurations (any Fock level)."""
    energies = all_spin_energies(sg)
    marg = (np.abs(state.as_matrix()) ** 2).sum(axis=1)
    return float(marg[energies == energies.min()].sum())


def lower_energy_probability(state: CompositeState, sg: SpinGlass,
                             e_ref: float) -> float:
    """Total probability on configurations strictly below the reference energy."""
    energies = all_spin_energies(sg)
    marg = (np.abs(state.as_matrix()) ** 2).sum(axis=1)
    return float(marg[energies < e_ref].sum())


def hamming_distribution(state: CompositeState, ref_config) -> np.ndarray:
    """Probability histogram over Hamming distance from ``ref_config``."""
    ref = spin_config_bits(ref_config, state.n_s)
    marg = (np.abs(state.as_matrix()) ** 2).sum(axis=1)
    bins = popcount(np.arange(marg.size) ^ ref)
    return np.bincount(bins, weights=marg, minlength=state.n_s + 1)


def fock_distribution(state: CompositeState) -> np.ndarray:
    """Probability histogram over the bath Fock levels."""
    return (np.abs(state.as_matrix()) ** 2).sum(axis=0)


def entanglement_entropy(state: CompositeState) -> float:
    """Von Neumann entropy (natural log) of the reduced spin state."""
    svals = np.linalg.svd(state.as_matrix(), compute_uv=False)
    lam = svals ** 2
    lam = lam[lam > 1e-300]
    return float(-np.sum(lam * np.log(lam)))


def joint_correlation(state: CompositeState, sg: SpinGlass) -> float:
    """Joint-probability correlation between spin-ground and bath-ground
    projectors: C = -<Psg Pbg> + <Psg><Pbg>."""
    probs = np.abs(state.as_matrix()) ** 2
    energies = all_spin_energies(sg)
    gmask = energies == energies.min()
    p_sg = probs[gmask, :].sum()
    p_bg = probs[:, 0].sum()
    joint = probs[gmask, 0].sum()
    return float(-joint + p_sg * p_bg)


def low_eigenstate_localization(h, count: int, n_max: int) -> list[float]:
    """P_max (largest Fock-marginalized configuration probability) for each of
    the ``count`` lowest eigenstates of the composite Hamiltonian."""
    dim = h.shape[0]
    if count < 1 or count > dim:
        raise ValueError(f"count must be in [1, {dim}]")
    if dim <= 8192:
        hd = h.toarray() if sp.issparse(h) else np.asarray(h)
        w, v = np.linalg.eigh(hd)
        vecs = v[:, :count]
    else:
        hs = h.tocsr()
        # Gershgorin lower bound keeps the shift strictly below the spectrum.
        row_abs = np.abs(hs).sum(axis=1).A1 if hasattr(np.abs(hs).sum(axis=1), "A1") \
            else np.asarray(np.abs(hs).sum(axis=1)).ravel()
        diag = hs.diagonal().real
        sigma = float((diag - (row_abs - np.abs(diag))).min()) - 1.0
        try:
            w, vecs = spla.eigsh(hs, k=count, sigma=sigma, which="LM", tol=1e-10)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError(
                f"eigensolver failed to converge: {exc}"
            ) from exc
        order = np.argsort(w)
        vecs = vecs[:, order]
    out = []
    for i in range(count):
        marg = (np.abs(vecs[:, i].reshape(-1, n_max + 1)) ** 2).sum(axis=1)
        out.append(float(marg.max()))
    return out
