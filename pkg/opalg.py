"""
Dense operator algebra on a bipartite system (x) bath Hilbert space.

Tensor order is fixed as system (x) bath, system indices slowest. Every
Operator records its factorization so partial traces and the mod_B
projector can check it.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg as la

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
STATE_TOL = 1e-10
PURITY_TOL = 1e-12
SQRT_TOL = 1e-13
BRANCH_EPS = 1e-6


class NotHermitianError(ValueError):
    """Raised when an operator expected to be Hermitian is not."""

    def __init__(self, anti_hermitian_norm: float):
        self.anti_hermitian_norm = anti_hermitian_norm
        super().__init__(
            f"Operator is not Hermitian: ||(A - A^dag)/2|| = {anti_hermitian_norm:.3e}"
        )


class NotUnitaryError(ValueError):
    """Raised when an operator expected to be unitary is not."""


class BranchAmbiguityError(ArithmeticError):
    """An eigenphase sits on the branch cut of the principal logarithm."""

    def __init__(self, phase: float):
        self.phase = phase
        super().__init__(
            f"Eigenphase {phase:.12f} is within {BRANCH_EPS:g} of +/-pi; "
            "the error action is outside the perturbative regime (shrink tau_min)"
        )


class InvalidStateError(ValueError):
    """Raised for matrices that are not valid density matrices."""


class FactorizationError(ValueError):
    """Raised when dim_s * dim_b does not match the matrix size."""


class DimensionMismatchError(ValueError):
    """Raised when two operands live on spaces of different dimension."""


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix on a system (x) bath factorization."""

    matrix: np.ndarray
    dim_s: int
    dim_b: int = 1

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise FactorizationError(f"Operator matrix must be square, got shape {matrix.shape}")
        if self.dim_s <= 0 or self.dim_b <= 0:
            raise FactorizationError(f"Factor dimensions must be positive ({self.dim_s}, {self.dim_b})")
        if matrix.shape[0] != self.dim_s * self.dim_b:
            raise FactorizationError(
                f"Matrix side {matrix.shape[0]} does not match dim_s*dim_b = "
                f"{self.dim_s}*{self.dim_b}"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @property
    def dim(self) -> int:
        return self.dim_s * self.dim_b

    @classmethod
    def identity(cls, dim_s: int, dim_b: int = 1) -> 'Operator':
        return cls(np.eye(dim_s * dim_b), dim_s, dim_b)

    @classmethod
    def zeros(cls, dim_s: int, dim_b: int = 1) -> 'Operator':
        return cls(np.zeros((dim_s * dim_b, dim_s * dim_b)), dim_s, dim_b)

    def dag(self) -> 'Operator':
        return Operator(self.matrix.conj().T, self.dim_s, self.dim_b)

    def anti_hermitian_norm(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T, 2)) / 2.0

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        scale = max(1.0, float(np.linalg.norm(self.matrix, 2)))
        return self.anti_hermitian_norm() <= tol * scale

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        gram = self.matrix.conj().T @ self.matrix
        return float(np.linalg.norm(gram - np.eye(self.dim), 2)) <= tol

    def _check_compatible(self, other: 'Operator'):
        if (self.dim_s, self.dim_b) != (other.dim_s, other.dim_b):
            raise DimensionMismatchError(
                f"Factorizations differ: ({self.dim_s}, {self.dim_b}) vs ({other.dim_s}, {other.dim_b})"
            )

    def __add__(self, other: 'Operator') -> 'Operator':
        self._check_compatible(other)
        return Operator(self.matrix + other.matrix, self.dim_s, self.dim_b)

    def __sub__(self, other: 'Operator') -> 'Operator':
        self._check_compatible(other)
        return Operator(self.matrix - other.matrix, self.dim_s, self.dim_b)

    def __matmul__(self, other: 'Operator') -> 'Operator':
        self._check_compatible(other)
        return Operator(self.matrix @ other.matrix, self.dim_s, self.dim_b)

    def __mul__(self, scalar: complex) -> 'Operator':
        return Operator(self.matrix * scalar, self.dim_s, self.dim_b)

    __rmul__ = __mul__

    def __neg__(self) -> 'Operator':
        return Operator(-self.matrix, self.dim_s, self.dim_b)

    def allclose(self, other: 'Operator', atol: float = 1e-12) -> bool:
        self._check_compatible(other)
        return float(np.linalg.norm(self.matrix - other.matrix, 2)) <= atol


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidStateError(f"Density matrix must be square, got shape {matrix.shape}")
        if np.linalg.norm(matrix - matrix.conj().T, 2) > STATE_TOL:
            raise InvalidStateError("Density matrix is not Hermitian")
        trace = np.trace(matrix).real
        if abs(trace - 1.0) > STATE_TOL:
            raise InvalidStateError(f"Density matrix trace is {trace:.12f}, expected 1")
        smallest = float(np.linalg.eigvalsh(matrix).min())
        if smallest < -STATE_TOL:
            raise InvalidStateError(f"Density matrix has negative eigenvalue {smallest:.3e}")
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_pure(cls, psi) -> 'DensityMatrix':
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidStateError("State vector is zero")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, dimension: int) -> 'DensityMatrix':
        return cls(np.eye(dimension) / dimension)


OperatorLike = Union[Operator, np.ndarray]


def _as_operator(a: OperatorLike) -> Operator:
    if isinstance(a, Operator):
        return a
    a = np.asarray(a, dtype=complex)
    return Operator(a, a.shape[0], 1)


def tensor(a: OperatorLike, b: OperatorLike) -> Operator:
    """Kronecker product a (x) b with a as the system factor."""
    a = _as_operator(a)
    b = _as_operator(b)
    return Operator(np.kron(a.matrix, b.matrix), a.dim, b.dim)


def on_system(a: np.ndarray, dim_b: int) -> Operator:
    """Extend a system operator by the bath identity."""
    return tensor(a, np.eye(dim_b))


def matexp(h: Operator, t: float) -> Operator:
    """
    Propagator exp(-i h t) of a Hermitian generator.

    Args:
        h: Hermitian operator
        t: duration

    Returns:
        Unitary operator with the same factorization as h
    """
    if not h.is_hermitian():
        raise NotHermitianError(h.anti_hermitian_norm())
    if t == 0:
        return Operator.identity(h.dim_s, h.dim_b)
    hermitian = (h.matrix + h.matrix.conj().T) / 2.0
    energies, vectors = np.linalg.eigh(hermitian)
    phases = np.exp(-1j * energies * t)
    return Operator((vectors * phases) @ vectors.conj().T, h.dim_s, h.dim_b)


def matexp_difference(h0: Operator, v: Operator, t: float) -> Operator:
    """
    exp(-i (h0 + v) t) - exp(-i h0 t), accurate relative to ||v|| t.

    The difference is the upper-right block of the exponential of the block
    triangular generator [[-i(h0 + v), -i v], [0, -i h0]] t. Every term of that
    block carries one factor of v, so rounding stays proportional to it.
    """
    for h in (h0, v):
        if not h.is_hermitian():
            raise NotHermitianError(h.anti_hermitian_norm())
    if h0.matrix.shape != v.matrix.shape:
        raise DimensionMismatchError(
            f"Cannot combine generators of shape {h0.matrix.shape} and {v.matrix.shape}"
        )
    dim = h0.dim
    generator = np.zeros((2 * dim, 2 * dim), dtype=complex)
    generator[:dim, :dim] = -1j * (h0.matrix + v.matrix) * t
    generator[:dim, dim:] = -1j * v.matrix * t
    generator[dim:, dim:] = -1j * h0.matrix * t
    return Operator(la.expm(generator)[:dim, dim:], h0.dim_s, h0.dim_b)


def matlog_unitary(u: Operator, eps: float = BRANCH_EPS) -> Operator:
    """
    Hermitian E with exp(-iE) = u on the principal branch.

    A complex Schur form of a normal matrix is diagonal, so the Schur
    vectors give an orthonormal eigenbasis even for degenerate phases.
    """
    if not u.is_unitary():
        gram = u.matrix.conj().T @ u.matrix
        deviation = float(np.linalg.norm(gram - np.eye(u.dim), 2))
        raise NotUnitaryError(f"Operator is not unitary: ||U^dag U - I|| = {deviation:.3e}")
    schur_form, vectors = la.schur(u.matrix, output='complex')
    phases = np.angle(np.diag(schur_form))
    worst = float(np.max(np.abs(phases)))
    if worst > np.pi - eps:
        raise BranchAmbiguityError(float(phases[np.argmax(np.abs(phases))]))
    # exp(-iE) = V diag(e^{i phase}) V^dag  =>  E = V diag(-phase) V^dag
    e = (vectors * -phases) @ vectors.conj().T
    e = (e + e.conj().T) / 2.0
    return Operator(e, u.dim_s, u.dim_b)


def spectral_norm(a: OperatorLike) -> float:
    """Largest singular value."""
    a = _as_operator(a)
    return float(np.linalg.norm(a.matrix, 2))


def _as_state(r) -> DensityMatrix:
    if isinstance(r, DensityMatrix):
        return r
    if isinstance(r, Operator):
        return DensityMatrix(r.matrix)
    return DensityMatrix(np.asarray(r, dtype=complex))


def trace_distance(r1, r2) -> float:
    """Trace norm ||r1 - r2||_1, without the 1/2 factor (range [0, 2])."""
    r1 = _as_state(r1)
    r2 = _as_state(r2)
    if r1.dimension != r2.dimension:
        raise DimensionMismatchError(
            f"Cannot compare states of dimension {r1.dimension} and {r2.dimension}"
        )
    return trace_norm(r1.matrix - r2.matrix)


def trace_norm(a: OperatorLike) -> float:
    """Sum of singular values."""
    matrix = a.matrix if isinstance(a, Operator) else np.asarray(a, dtype=complex)
    return float(np.sum(np.linalg.svd(matrix, compute_uv=False)))


def partial_trace(a: Operator, factor: str) -> Operator:
    """
    Trace out one factor of a system (x) bath operator.

    Args:
        a: operator with a consistent factorization
        factor: 'system' or 'bath', the factor to trace out

    Returns:
        Operator on the surviving factor (its dim_b is 1)
    """
    if a.matrix.shape[0] != a.dim_s * a.dim_b:
        raise FactorizationError("Operator factorization is inconsistent with its matrix")
    blocks = a.matrix.reshape(a.dim_s, a.dim_b, a.dim_s, a.dim_b)
    if factor == 'bath':
        reduced = np.einsum('ijkj->ik', blocks)
        return Operator(reduced, a.dim_s, 1)
    if factor == 'system':
        reduced = np.einsum('ijil->jl', blocks)
        return Operator(reduced, a.dim_b, 1)
    raise ValueError(f"Unknown factor '{factor}', expected 'system' or 'bath'")


def mod_b(e: Operator) -> Operator:
    """Remove the pure-bath component: E - I_S (x) Tr_S(E) / Tr(I_S)."""
    bath_part = partial_trace(e, 'system').matrix / e.dim_s
    return Operator(e.matrix - np.kron(np.eye(e.dim_s), bath_part), e.dim_s, e.dim_b)


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Square root of a positive semidefinite matrix; small negative eigenvalues are clipped."""
    values, vectors = np.linalg.eigh((matrix + matrix.conj().T) / 2.0)
    if values.min() < -STATE_TOL:
        raise InvalidStateError(f"Negative eigenvalue {values.min():.3e} beyond tolerance")
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.conj().T


def pure_vector(r) -> Optional[np.ndarray]:
    """State vector of a rank-one density matrix, or None for mixed states."""
    values, vectors = np.linalg.eigh(_as_state(r).matrix)
    if values[-1] < 1.0 - PURITY_TOL:
        return None
    return vectors[:, -1]


def fidelity(actual, target) -> float:
    """
    Uhlmann root fidelity Tr sqrt(sqrt(rho_a) rho_t sqrt(rho_a)), in [0, 1].

    When either state is pure this is sqrt(<psi|rho|psi>). Otherwise eigenvalues
    of the inner matrix below SQRT_TOL are rounding residue and count as zero.
    """
    actual = _as_state(actual)
    target = _as_state(target)
    if actual.dimension != target.dimension:
        raise DimensionMismatchError(
            f"Cannot compare states of dimension {actual.dimension} and {target.dimension}"
        )
    for pure, other in ((target, actual), (actual, target)):
        psi = pure_vector(pure)
        if psi is not None:
            overlap = float(np.real(psi.conj() @ other.matrix @ psi))
            return math.sqrt(min(max(overlap, 0.0), 1.0))
    root = psd_sqrt(actual.matrix)
    inner = root @ target.matrix @ root
    values = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    if values.min() < -STATE_TOL:
        raise InvalidStateError(f"Negative eigenvalue {values.min():.3e} beyond tolerance")
    values = np.where(values > SQRT_TOL, values, 0.0)
    return min(float(np.sum(np.sqrt(values))), 1.0)
