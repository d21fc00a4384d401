"""
Exact propagation of piecewise-constant schedules under control plus error
Hamiltonians, and the figures of merit extracted from the joint propagator.

Propagators are accumulated in the toggling frame of the ideal control:
U = (P (x) I)(I + A), where P is the product of the ideal segment rotations and
A collects the error. A stays small, so rounding in long schedules scales with
the error rather than with the propagator itself.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from errmodel import ErrorHamiltonian
from opalg import (
    DensityMatrix,
    Operator,
    matexp,
    matexp_difference,
    matlog_unitary,
    mod_b,
    on_system,
    partial_trace,
    psd_sqrt,
    spectral_norm,
    trace_norm,
)
from synth import GateSpec, PrimitiveSegment, Schedule

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-9
# ideal control products of synthesized gates match their targets far inside this
CONTROL_TOL = 1e-10

TargetLike = Union[GateSpec, np.ndarray]


def target_unitary(target: TargetLike) -> np.ndarray:
    if isinstance(target, GateSpec):
        return target.unitary()
    return np.asarray(target, dtype=complex)


def plus_state() -> np.ndarray:
    return np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    schedule: Schedule
    error: ErrorHamiltonian
    target: GateSpec
    initial_system_state: np.ndarray = field(default_factory=plus_state)
    bath_state: Optional[DensityMatrix] = None
    level: int = 0
    tau_min: float = 0.0

    def __post_init__(self):
        state = np.asarray(self.initial_system_state, dtype=complex).reshape(-1)
        if state.shape[0] != self.error.h_e.dim_s:
            raise ValueError(
                f"Initial state has dimension {state.shape[0]}, system has {self.error.h_e.dim_s}"
            )
        object.__setattr__(self, 'initial_system_state', state / np.linalg.norm(state))
        if self.bath_state is None:
            object.__setattr__(self, 'bath_state', DensityMatrix.maximally_mixed(self.error.h_e.dim_b))
        elif self.bath_state.dimension != self.error.h_e.dim_b:
            raise ValueError(
                f"Bath state has dimension {self.bath_state.dimension}, bath has {self.error.h_e.dim_b}"
            )


@dataclass(frozen=True, eq=False)
class SimulationResult:
    u_total: Operator
    epg_eta: float
    trace_dist: float
    fid: float
    infid: float
    total_duration: float
    level: int
    tau_min: float

    @property
    def normalized_distance(self) -> float:
        return self.trace_dist / 2.0

    @property
    def infidelity(self) -> float:
        return self.infid


@dataclass(frozen=True)
class BoundChain:
    """Margins of D <= eta and 1 - D <= f <= sqrt(1 - D^2), with D = Delta/2."""

    eta_margin: float
    lower_margin: float
    upper_margin: float

    @property
    def ok(self) -> bool:
        return min(self.eta_margin, self.lower_margin, self.upper_margin) >= -BOUND_SLACK


@dataclass(frozen=True, eq=False)
class TogglingPropagator:
    """Joint propagator (control (x) I)(I + deviation)."""

    control: np.ndarray
    deviation: np.ndarray
    dim_s: int
    dim_b: int

    @property
    def dim(self) -> int:
        return self.dim_s * self.dim_b

    def unitary(self) -> Operator:
        frame = np.kron(self.control, np.eye(self.dim_b))
        return Operator(frame + frame @ self.deviation, self.dim_s, self.dim_b)


PropagatorLike = Union[Operator, TogglingPropagator]


def segment_propagator(seg: PrimitiveSegment, h_e: Operator) -> Operator:
    """exp(-i (H_seg (x) I_B + H_e) duration), exact for a rectangular segment."""
    control = on_system(seg.hamiltonian(), h_e.dim_b)
    return matexp(control + h_e, seg.duration)


def _interaction_step(seg: PrimitiveSegment, h_e: Operator) -> Tuple[np.ndarray, np.ndarray]:
    """Ideal rotation C of a segment and the deviation (C^dag (x) I) U - I."""
    rotation = GateSpec(seg.axis, seg.angle).unitary()
    control = on_system(seg.hamiltonian(), h_e.dim_b)
    difference = matexp_difference(control, h_e, seg.duration).matrix
    return rotation, np.kron(rotation.conj().T, np.eye(h_e.dim_b)) @ difference


def toggling_frame(s: Schedule, h_e: Operator) -> TogglingPropagator:
    """
    Accumulate a schedule in the toggling frame of its ideal control.

    With P_k the ideal control after k segments, each segment contributes
    (I + D_k) with D_k = (P_{k-1}^dag (x) I) step_k (P_{k-1} (x) I), and the
    error-frame product is updated as A <- D_k + A + D_k A.
    """
    if len(s) == 0:
        raise ValueError("Cannot run an empty schedule")
    cache: Dict[Tuple[Tuple[float, float, float], float, float], Tuple[np.ndarray, np.ndarray]] = {}
    eye_b = np.eye(h_e.dim_b)
    prefix = np.eye(h_e.dim_s, dtype=complex)
    deviation = np.zeros((h_e.dim, h_e.dim), dtype=complex)
    for seg in s.segments:
        key = (seg.axis, seg.angle, seg.duration)
        entry = cache.get(key)
        if entry is None:
            entry = _interaction_step(seg, h_e)
            cache[key] = entry
        rotation, step = entry
        frame = np.kron(prefix, eye_b)
        toggled = frame.conj().T @ step @ frame
        deviation = toggled + deviation + toggled @ deviation
        prefix = rotation @ prefix
    logger.debug(f"Ran {len(s)} segments with {len(cache)} distinct propagators")
    return TogglingPropagator(prefix, deviation, h_e.dim_s, h_e.dim_b)


def run_schedule(s: Schedule, h_e: Operator) -> Operator:
    """Joint propagator of a schedule; later segments multiply on the left."""
    return toggling_frame(s, h_e).unitary()


def _realizes(control: np.ndarray, q: np.ndarray) -> bool:
    """Q^dag P equals a phase times the identity within CONTROL_TOL."""
    offset = q.conj().T @ control
    overlap = np.trace(offset)
    if abs(overlap) == 0:
        return False
    phase = overlap / abs(overlap)
    return np.linalg.norm(offset - phase * np.eye(len(offset)), 2) <= CONTROL_TOL


def target_frame(u_total: PropagatorLike, target: TargetLike) -> np.ndarray:
    """
    Deviation K with (Q^dag (x) I) U = e^{i phi} (I + K).

    A toggling-frame propagator whose ideal control realizes Q up to phase
    contributes its own deviation. Otherwise the phase is fixed so that
    Tr((Q^dag (x) I) U) is real and positive.
    """
    q = target_unitary(target)
    if isinstance(u_total, TogglingPropagator):
        if _realizes(u_total.control, q):
            return u_total.deviation
        u_total = u_total.unitary()
    relative = on_system(q, u_total.dim_b).dag().matrix @ u_total.matrix
    overlap = np.trace(relative)
    if abs(overlap) > 0:
        relative = relative * (overlap.conjugate() / abs(overlap))
    return relative - np.eye(u_total.dim)


def _error_from_deviation(k: np.ndarray, dim_s: int, dim_b: int) -> Tuple[Operator, float]:
    relative = np.eye(dim_s * dim_b) + k
    overlap = np.trace(relative)
    if abs(overlap) > 0:
        relative = relative * (overlap.conjugate() / abs(overlap))
    e = matlog_unitary(Operator(relative, dim_s, dim_b))
    return e, spectral_norm(mod_b(e))


def error_action(u_total: PropagatorLike, target: TargetLike) -> Tuple[Operator, float]:
    """
    Error action E with U = (Q (x) I) exp(-iE), and eta = ||mod_B(E)||.

    The global phase of U is fixed first so that Tr((Q^dag (x) I) U) is real
    and positive.
    """
    k = target_frame(u_total, target)
    return _error_from_deviation(k, u_total.dim_s, u_total.dim_b)


def state_metrics(k: np.ndarray, system_state: np.ndarray, bath_state: DensityMatrix,
                  dim_s: int) -> Tuple[float, float, float]:
    """
    Trace distance, root fidelity and infidelity of the reduced final state.

    Works in the target frame, where the ideal final state is the initial one
    and the actual one is reached through I + K. The target is pure, so
    1 - f^2 is the weight of the actual state orthogonal to it, computed from K
    alone, and 1 - f = (1 - f^2) / (1 + f).
    """
    dim_b = bath_state.dimension
    psi = np.asarray(system_state, dtype=complex).reshape(-1)
    amplitude = np.kron(psi.reshape(-1, 1), psd_sqrt(bath_state.matrix))
    moved = k @ amplitude

    blocks = moved.reshape(dim_s, dim_b, dim_b)
    orthogonal = blocks - np.einsum('i,j,jab->iab', psi, psi.conj(), blocks)
    leakage = min(float(np.vdot(orthogonal, orthogonal).real), 1.0)
    fid = math.sqrt(1.0 - leakage)
    infid = leakage / (1.0 + fid)

    change = moved @ amplitude.conj().T
    change = change + change.conj().T + moved @ moved.conj().T
    reduced = partial_trace(Operator(change, dim_s, dim_b), 'bath')
    return trace_norm(reduced), fid, infid


def evaluate(cfg: SimulationConfig) -> SimulationResult:
    """Simulate a configured schedule and report eta, Delta and f."""
    h_e = cfg.error.h_e
    frame = toggling_frame(cfg.schedule, h_e)
    k = target_frame(frame, cfg.target)
    _, eta = _error_from_deviation(k, h_e.dim_s, h_e.dim_b)
    trace_dist, fid, infid = state_metrics(k, cfg.initial_system_state, cfg.bath_state, h_e.dim_s)
    result = SimulationResult(
        u_total=frame.unitary(),
        epg_eta=eta,
        trace_dist=trace_dist,
        fid=fid,
        infid=infid,
        total_duration=cfg.schedule.total_duration,
        level=cfg.level,
        tau_min=cfg.tau_min,
    )
    chain = check_bound_chain(result)
    if not chain.ok:
        logger.warning(
            f"Bound chain violated at level {cfg.level}, tau_min={cfg.tau_min:.3e}: {chain}"
        )
    return result


def check_bound_chain(result: SimulationResult) -> BoundChain:
    distance = result.normalized_distance
    return BoundChain(
        eta_margin=result.epg_eta - distance,
        lower_margin=result.fid - (1.0 - distance),
        upper_margin=math.sqrt(max(0.0, 1.0 - distance ** 2)) - result.fid,
    )


def max_state_distance(u_total: PropagatorLike, target: TargetLike,
                       bath_state: Optional[DensityMatrix] = None,
                       n_states: int = 20, seed: int = 0) -> float:
    """Largest normalized distance over random pure initial system states."""
    if bath_state is None:
        bath_state = DensityMatrix.maximally_mixed(u_total.dim_b)
    k = target_frame(u_total, target)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        psi = rng.normal(size=u_total.dim_s) + 1j * rng.normal(size=u_total.dim_s)
        psi = psi / np.linalg.norm(psi)
        trace_dist, _, _ = state_metrics(k, psi, bath_state, u_total.dim_s)
        worst = max(worst, trace_dist / 2.0)
    return worst


def compose_first_order(schedules: Sequence[Tuple[Schedule, TargetLike]], h_e: Operator) -> Operator:
    """
    First-order composition sum_j P_{j-1}^dag E_j P_{j-1} of sub-gate errors.

    P_j = Q_j ... Q_1 is the ideal partial control propagator.
    """
    if not schedules:
        raise ValueError("Need at least one sub-gate")
    composed = Operator.zeros(h_e.dim_s, h_e.dim_b)
    partial = np.eye(h_e.dim_s, dtype=complex)
    for schedule, target in schedules:
        e_j, _ = error_action(toggling_frame(schedule, h_e), target)
        p = on_system(partial, h_e.dim_b)
        composed = composed + p.dag() @ e_j @ p
        partial = target_unitary(target) @ partial
    return composed


def composite_target(targets: Sequence[TargetLike]) -> np.ndarray:
    """Ideal product of sub-gate targets, later gates on the left."""
    product = np.eye(2, dtype=complex)
    for target in targets:
        product = target_unitary(target) @ product
    return product


def free_evolution_eta(h_e: Operator, total_duration: float) -> float:
    """eta of doing nothing for total_duration (the zeroth-order NOOP)."""
    u = matexp(h_e, total_duration)
    _, eta = error_action(u, np.eye(h_e.dim_s))
    return eta

