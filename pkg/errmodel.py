"""
Error Hamiltonian of a central qubit coupled to a small spin bath.

H_e = H_{S,e} + H_SB + H_B with a Heisenberg system-bath coupling and a
dipolar intra-bath interaction. Couplings are drawn from a PCG64 stream
seeded by the spec, in the order j_1..j_n then b_12, b_13, ..., b_23, ...
Spin operators follow the S = sigma/2 convention.
"""

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Optional, Sequence, Set, Tuple

import numpy as np

from opalg import Operator, mod_b, partial_trace, spectral_norm

logger = logging.getLogger(__name__)

SPIN_CONVENTION = 'S = sigma/2'
MAX_BATH_SPINS = 8

PAULI = {
    'I': np.eye(2, dtype=complex),
    'X': np.array([[0, 1], [1, 0]], dtype=complex),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'Z': np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class SpinBathSpec:
    """Everything needed to rebuild the same error Hamiltonian."""

    n_bath: int = 3
    j_max: float = 10.0
    b_max: float = 1e-2
    seed: int = 1
    h_drift: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    # Explicit couplings bypass the RNG; used to pin closed-form cases.
    j_values: Optional[Tuple[float, ...]] = field(default=None)
    b_values: Optional[Tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        if not 1 <= self.n_bath <= MAX_BATH_SPINS:
            raise ValueError(f"n_bath must be in 1..{MAX_BATH_SPINS}, got {self.n_bath}")
        if self.j_max <= 0:
            raise ValueError(f"j_max must be positive, got {self.j_max}")
        if self.b_max < 0:
            raise ValueError(f"b_max must be non-negative, got {self.b_max}")
        if len(self.h_drift) != 3:
            raise ValueError("h_drift must hold three coefficients (X, Y, Z)")
        object.__setattr__(self, 'h_drift', tuple(float(h) for h in self.h_drift))
        if self.j_values is not None:
            if len(self.j_values) != self.n_bath:
                raise ValueError(f"j_values needs {self.n_bath} entries, got {len(self.j_values)}")
            object.__setattr__(self, 'j_values', tuple(float(j) for j in self.j_values))
        if self.b_values is not None:
            if len(self.b_values) != self.pair_count:
                raise ValueError(f"b_values needs {self.pair_count} entries, got {len(self.b_values)}")
            object.__setattr__(self, 'b_values', tuple(float(b) for b in self.b_values))

    @property
    def pair_count(self) -> int:
        return self.n_bath * (self.n_bath - 1) // 2

    @property
    def dim_b(self) -> int:
        return 2 ** self.n_bath

    @property
    def dimension(self) -> int:
        return 2 ** (self.n_bath + 1)


@dataclass(frozen=True, eq=False)
class ErrorHamiltonian:
    """H_e split into its drift, coupling and pure-bath parts."""

    h_e: Operator
    h_sb: Operator
    h_b: Operator
    h_se: Operator
    norm_he: float
    norm_err: float
    couplings: Dict[str, Tuple[float, ...]]
    spin_convention: str = SPIN_CONVENTION


def bath_pairs(n_bath: int):
    """Ordered pairs (i, j), i < j, in stream order."""
    return [(i, j) for i in range(n_bath) for j in range(i + 1, n_bath)]


def draw_couplings(spec: SpinBathSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Draw (j, b) from the pinned PCG64 stream unless the spec fixes them."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    j = rng.uniform(0.0, spec.j_max, size=spec.n_bath)
    b = rng.uniform(0.0, spec.b_max, size=spec.pair_count) if spec.b_max > 0 else np.zeros(spec.pair_count)
    if spec.j_values is not None:
        j = np.array(spec.j_values, dtype=float)
    if spec.b_values is not None:
        b = np.array(spec.b_values, dtype=float)
    return j, b


def _embed(ops: Dict[int, np.ndarray], n_sites: int) -> np.ndarray:
    # Site 0 is the system spin, sites 1..n are bath spins.
    factors = [ops.get(site, PAULI['I']) for site in range(n_sites)]
    return reduce(np.kron, factors)


def _spin(label: str) -> np.ndarray:
    return PAULI[label] / 2.0


def heisenberg_from_couplings(j: Sequence[float]) -> Operator:
    """sum_i j_i S . I^(i) on system (x) bath."""
    n_bath = len(j)
    n_sites = n_bath + 1
    dim = 2 ** n_sites
    matrix = np.zeros((dim, dim), dtype=complex)
    for i, coupling in enumerate(j):
        if coupling == 0:
            continue
        for label in ('X', 'Y', 'Z'):
            matrix += coupling * _embed({0: _spin(label), i + 1: _spin(label)}, n_sites)
    return Operator(matrix, 2, 2 ** n_bath)


def dipolar_from_couplings(b: Sequence[float], n_bath: int) -> Operator:
    """sum_{i<j} b_ij (I_X I_X + I_Y I_Y - 2 I_Z I_Z), identity on the system."""
    n_sites = n_bath + 1
    dim = 2 ** n_sites
    matrix = np.zeros((dim, dim), dtype=complex)
    for (i, k), coupling in zip(bath_pairs(n_bath), b):
        if coupling == 0:
            continue
        for label, weight in (('X', 1.0), ('Y', 1.0), ('Z', -2.0)):
            matrix += coupling * weight * _embed({i + 1: _spin(label), k + 1: _spin(label)}, n_sites)
    return Operator(matrix, 2, 2 ** n_bath)


def build_heisenberg_coupling(spec: SpinBathSpec) -> Operator:
    j, _ = draw_couplings(spec)
    return heisenberg_from_couplings(j)


def build_dipolar_bath(spec: SpinBathSpec) -> Operator:
    _, b = draw_couplings(spec)
    return dipolar_from_couplings(b, spec.n_bath)


def build_drift(spec: SpinBathSpec) -> Operator:
    """H_{S,e} = sum_a h_a sigma_a (x) I_B."""
    system = sum(h * PAULI[label] for h, label in zip(spec.h_drift, ('X', 'Y', 'Z')))
    return Operator(np.kron(system, np.eye(spec.dim_b)), 2, spec.dim_b)


def assemble(spec: SpinBathSpec) -> ErrorHamiltonian:
    """Build H_e for a spec; the same spec always gives the same matrices."""
    j, b = draw_couplings(spec)
    h_sb = heisenberg_from_couplings(j)
    h_b = dipolar_from_couplings(b, spec.n_bath)
    h_se = build_drift(spec)
    h_e = h_se + h_sb + h_b

    norm_he = spectral_norm(h_e)
    norm_err = spectral_norm(h_se + h_sb)
    parts = spectral_norm(h_se) + spectral_norm(h_sb) + spectral_norm(h_b)
    if norm_he > parts * (1 + 1e-12) + 1e-12:
        raise ArithmeticError(f"Triangle inequality violated: {norm_he} > {parts}")

    logger.debug(
        f"Assembled H_e for n_bath={spec.n_bath}, seed={spec.seed}: "
        f"||H_e||={norm_he:.6g}, ||H_SB+H_Se||={norm_err:.6g}"
    )
    return ErrorHamiltonian(
        h_e=h_e,
        h_sb=h_sb,
        h_b=h_b,
        h_se=h_se,
        norm_he=norm_he,
        norm_err=norm_err,
        couplings={'j': tuple(float(x) for x in j), 'b': tuple(float(x) for x in b)},
    )


def pauli_decomposition(h: Operator) -> Dict[str, Operator]:
    """Bath partners B_a = Tr_S((sigma_a (x) I_B) h) / 2 of a qubit operator."""
    if h.dim_s != 2:
        raise ValueError(f"Pauli decomposition needs a qubit system, got dim_s={h.dim_s}")
    partners = {}
    for label, sigma in PAULI.items():
        weighted = Operator(np.kron(sigma, np.eye(h.dim_b)) @ h.matrix, h.dim_s, h.dim_b)
        partners[label] = partial_trace(weighted, 'system') * 0.5
    return partners


def error_span(h, tol: float = 1e-12) -> Set[str]:
    """System Pauli labels with a non-zero bath partner in H_e."""
    operator = h.h_e if isinstance(h, ErrorHamiltonian) else h
    partners = pauli_decomposition(operator)
    return {label for label, partner in partners.items() if spectral_norm(partner) > tol}


def is_pure_bath(h: Operator, tol: float = 1e-12) -> bool:
    return spectral_norm(mod_b(h)) <= tol
