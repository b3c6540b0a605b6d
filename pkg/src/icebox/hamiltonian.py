"""Problem, bath and interaction Hamiltonians on the composite spin-cavity space.

Units: hbar = 1 and omega_b = 1 throughout; energies in units of hbar*omega_b,
times in units of 1/omega_b.

Basis conventions (fixed for the whole package):
  * spin configurations are indexed by k in [0, 2**n_s); bit m of k gives the
    sigma_z eigenvalue of qubit m, with bit 0 -> s = +1 and bit 1 -> s = -1;
  * composite index is spin-major: index = k * (n_max + 1) + n_fock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SpinGlass",
    "BathSpec",
    "CouplingSpec",
    "ProblemInstance",
    "spin_config_bits",
    "spin_energy",
    "all_spin_energies",
    "build_problem",
    "build_bath",
    "build_interaction",
    "build_total",
    "generate_instance",
    "local_minima",
    "parity_of",
    "parity_phases",
    "total_parity",
]

OMEGA_B = 1.0


class ConfigError(ValueError):
    """Raised for invalid model parameters."""


def _check_half_integer(value: float, what: str) -> None:
    if abs(2.0 * value - round(2.0 * value)) > 1e-12:
        raise ConfigError(f"{what} must be a multiple of 1/2, got {value}")


@dataclass(frozen=True)
class SpinGlass:
    """Diagonal two-local problem Hamiltonian: on-site fields + ZZ couplings.

    ``on_site[m]`` multiplies sigma_z of qubit m; ``edges`` holds
    ``(m, m', J)`` with m < m' multiplying sigma_z^m sigma_z^m'.  All
    couplings are multiples of 1/2 so that level spacings stay integer and
    resonant with the unit-frequency bath.
    """

    n_s: int
    on_site: tuple[float, ...]
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_s < 1:
            raise ConfigError(f"need at least one qubit, got n_s={self.n_s}")
        if len(self.on_site) != self.n_s:
            raise ConfigError("on_site length must equal n_s")
        object.__setattr__(self, "on_site", tuple(float(j) for j in self.on_site))
        object.__setattr__(
            self, "edges",
            tuple((int(m), int(mp), float(j)) for m, mp, j in self.edges))
        for j in self.on_site:
            _check_half_integer(j, "on-site coupling")
        seen = set()
        for m, mp, j in self.edges:
            if not (0 <= m < mp < self.n_s):
                raise ConfigError(f"bad edge endpoints ({m}, {mp})")
            if (m, mp) in seen:
                raise ConfigError(f"duplicate edge ({m}, {mp})")
            seen.add((m, mp))
            _check_half_integer(j, "edge coupling")

    @property
    def n_configs(self) -> int:
        return 1 << self.n_s


@dataclass(frozen=True)
class BathSpec:
    """Single harmonic cavity mode truncated at Fock level n_max."""

    n_max: int
    omega_b: float = OMEGA_B

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return self.n_max + 1


@dataclass(frozen=True)
class CouplingSpec:
    """Qubit-cavity interaction strength (units hbar*omega_b)."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"coupling must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class ProblemInstance:
    """A generated benchmark spin glass plus its provenance."""

    spin_glass: SpinGlass
    seed: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        sg = self.spin_glass
        payload = {
            "n_s": sg.n_s,
            "on_site": [_coupling_str(j) for j in sg.on_site],
            "edges": [[m, mp, _coupling_str(j)] for m, mp, j in sg.edges],
            "seed": self.seed,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        payload = json.loads(text)
        sg = SpinGlass(
            n_s=int(payload["n_s"]),
            on_site=tuple(float(j) for j in payload["on_site"]),
            edges=tuple((int(m), int(mp), float(j)) for m, mp, j in payload["edges"]),
        )
        return cls(spin_glass=sg, seed=int(payload["seed"]),
                   metadata=payload.get("metadata", {}))


def _coupling_str(j: float) -> str:
    # couplings are exact dyadic rationals; "%g" renders them as exact decimals
    return f"{j:g}"


def spin_config_bits(config, n_s: int) -> int:
    """Normalize a configuration (int or bit-string, char i = qubit i) to an int."""
    if isinstance(config, str):
        if len(config) != n_s or set(config) - {"0", "1"}:
            raise ValueError(f"config string must be {n_s} chars of 0/1")
        return sum(1 << m for m, c in enumerate(config) if c == "1")
    k = int(config)
    if not 0 <= k < (1 << n_s):
        raise ValueError(f"config index {k} out of range for n_s={n_s}")
    return k


def _spin_values(k: int, n_s: int) -> np.ndarray:
    bits = (k >> np.arange(n_s)) & 1
    return 1.0 - 2.0 * bits


def spin_energy(sg: SpinGlass, config) -> float:
    """Energy of a single sigma_z configuration."""
    k = spin_config_bits(config, sg.n_s)
    s = _spin_values(k, sg.n_s)
    e = float(np.dot(sg.on_site, s))
    for m, mp, j in sg.edges:
        e += j * s[m] * s[mp]
    return e


def all_spin_energies(sg: SpinGlass) -> np.ndarray:
    """Vector of spin energies over all 2**n_s configurations (index = k)."""
    ks = np.arange(sg.n_configs, dtype=np.int64)
    s = 1.0 - 2.0 * ((ks[:, None] >> np.arange(sg.n_s)) & 1)
    e = s @ np.asarray(sg.on_site, dtype=np.float64)
    for m, mp, j in sg.edges:
        e += j * s[:, m] * s[:, mp]
    return e


def build_problem(sg: SpinGlass, bath: BathSpec) -> sp.csr_matrix:
    """H_s as a diagonal operator on the composite space."""
    diag = np.repeat(all_spin_energies(sg), bath.dim)
    return sp.diags(diag.astype(np.complex128)).tocsr()


def build_bath(sg: SpinGlass, bath: BathSpec) -> sp.csr_matrix:
    """H_b = omega_b (n + 1/2), identity on the spin factor."""
    levels = bath.omega_b * (np.arange(bath.dim) + 0.5)
    diag = np.tile(levels, sg.n_configs)
    return sp.diags(diag.astype(np.complex128)).tocsr()


def build_interaction(sg: SpinGlass, bath: BathSpec, cpl: CouplingSpec) -> sp.csr_matrix:
    """H_int = lam * (bdag - b) * sum_m (sigma+_m - sigma-_m).

    Both factors are anti-Hermitian, so the product is Hermitian.  Matrix
    elements connect states differing by exactly one spin flip and one Fock
    quantum: <k^m, n+1|H|k, n> = lam * f_m(k) * sqrt(n+1) and
    <k^m, n-1|H|k, n> = -lam * f_m(k) * sqrt(n), with f_m(k) = +1 when qubit m
    of k is down (sigma+ raises it) and -1 when up.
    """
    dim = sg.n_configs * bath.dim
    if cpl.lam == 0.0:
        return sp.csr_matrix((dim, dim), dtype=np.complex128)
    nf = bath.dim
    ks = np.arange(sg.n_configs, dtype=np.int64)
    ns = np.arange(bath.n_max, dtype=np.int64)  # transitions n <-> n+1
    sqrtn = np.sqrt(ns + 1.0)

    rows, cols, vals = [], [], []
    for m in range(sg.n_s):
        bit = (ks >> m) & 1
        flip_sign = np.where(bit == 1, 1.0, -1.0)  # sigma+ - sigma- on qubit m
        kflip = ks ^ (1 << m)
        low = (ks[:, None] * nf + ns[None, :]).ravel()           # |k, n>
        high = (kflip[:, None] * nf + (ns + 1)[None, :]).ravel()  # |k^m, n+1>
        v = (cpl.lam * flip_sign[:, None] * sqrtn[None, :]).ravel()
        # bdag part: |k, n> -> |k^m, n+1>
        rows.append(high)
        cols.append(low)
        vals.append(v)
        # -b part: |k, n+1> -> |k^m, n>; swapping k and k^m flips the sign,
        # which is what makes the two blocks each other's transpose.
        rows.append(low)
        cols.append(high)
        vals.append(v)
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    val = np.concatenate(vals).astype(np.complex128)
    return sp.coo_matrix((val, (row, col)), shape=(dim, dim)).tocsr()


def build_total(sg: SpinGlass, bath: BathSpec, cpl: CouplingSpec) -> sp.csr_matrix:
    """Full Hamiltonian H = H_s + H_b + H_int on the composite space."""
    h = build_problem(sg, bath) + build_bath(sg, bath) + build_interaction(sg, bath, cpl)
    return h.tocsr()


def default_n_max(sg: SpinGlass) -> int:
    """Fock truncation heuristic: the bath absorbs at most the system's
    energy drop, which is bounded by the spin spectral range; n_s + 4 leaves
    headroom that is verified post hoc by the evolution routines."""
    return sg.n_s + 4


def generate_instance(n_s: int, seed: int) -> ProblemInstance:
    """Random benchmark graph: ferromagnetic chain plus one random extra edge
    per qubit, with on-site energy splitting the two aligned ground states.

    All edges carry equal strength -1/2.  A duplicate random edge is redrawn
    until distinct so strengths never stack.  On-site energy +1/2 goes on
    qubit 0, and additionally on qubit 1 when n_s is even: the local-to-global
    gap must have the same parity as the n_s-flip Hamming distance, otherwise
    total-parity conservation forbids resonant relaxation into the global
    minimum.  The all-up configuration (k = 0) is the designated high-energy
    local minimum; all-down is the global minimum.
    """
    if n_s < 3:
        raise ConfigError(f"instance generator needs n_s >= 3, got {n_s}")
    rng = np.random.default_rng(seed)
    edges = {(m, m + 1) for m in range(n_s - 1)}
    for m in range(n_s):
        while True:
            other = int(rng.integers(0, n_s - 1))
            if other >= m:
                other += 1
            key = (min(m, other), max(m, other))
            if key not in edges:
                edges.add(key)
                break
    on_site = [0.0] * n_s
    field_qubits = [0] if n_s % 2 == 1 else [0, 1]
    for q in field_qubits:
        on_site[q] = 0.5
    sg = SpinGlass(
        n_s=n_s,
        on_site=tuple(on_site),
        edges=tuple(sorted((m, mp, -0.5) for m, mp in edges)),
    )
    meta = {
        "generator": "chain-plus-random-links",
        "n_s": n_s,
        "n_edges": len(edges),
        "field_qubits": field_qubits,
        "initial_config": 0,
        "global_config": (1 << n_s) - 1,
    }
    return ProblemInstance(spin_glass=sg, seed=seed, metadata=meta)


def local_minima(sg: SpinGlass) -> list[int]:
    """All configurations whose single-flip neighbors are strictly higher in
    energy (a tied neighbor disqualifies).  Exhaustive; n_s <= 20."""
    if sg.n_s > 20:
        raise ConfigError("exhaustive minimum scan limited to n_s <= 20")
    e = all_spin_energies(sg)
    ks = np.arange(sg.n_configs)
    is_min = np.ones(sg.n_configs, dtype=bool)
    for m in range(sg.n_s):
        is_min &= e < e[ks ^ (1 << m)]
    return [int(k) for k in np.nonzero(is_min)[0]]


def parity_of(state_index: int, n_s: int, n_max: int) -> complex:
    """Parity phase exp(i pi (n + sum_m s_m / 2)) of a composite basis state."""
    nf = n_max + 1
    k, n = divmod(int(state_index), nf)
    if not (0 <= k < (1 << n_s) and 0 <= n <= n_max):
        raise ValueError(f"state index {state_index} out of range")
    half_sz = 0.5 * (n_s - 2 * bin(k).count("1"))
    return complex(np.exp(1j * np.pi * (n + half_sz)))


def parity_phases(n_s: int, n_max: int) -> np.ndarray:
    """Diagonal of the total-parity operator over the composite basis."""
    nf = n_max + 1
    ks = np.arange(1 << n_s, dtype=np.int64)
    pops = np.array([bin(int(k)).count("1") for k in ks])
    half_sz = 0.5 * (n_s - 2 * pops)
    ns = np.arange(nf)
    phase = np.exp(1j * np.pi * (ns[None, :] + half_sz[:, None]))
    return phase.ravel()


def total_parity(amplitudes: np.ndarray, n_s: int, n_max: int) -> complex:
    """Expectation of the total-parity operator in the given composite state."""
    phases = parity_phases(n_s, n_max)
    return complex(np.dot(phases, np.abs(amplitudes) ** 2))
