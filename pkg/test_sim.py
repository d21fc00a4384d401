#!/usr/bin/env python3
"""
Tests for schedule propagation and the figures of merit.
"""

import math

import numpy as np
import pytest

from errmodel import PAULI, ErrorHamiltonian, SpinBathSpec, assemble
from opalg import DensityMatrix, Operator, matexp, mod_b, on_system, spectral_norm, tensor
from sim import (
    SimulationConfig,
    check_bound_chain,
    composite_target,
    compose_first_order,
    error_action,
    evaluate,
    free_evolution_eta,
    max_state_distance,
    run_schedule,
    segment_propagator,
    target_frame,
    toggling_frame,
)
from synth import (
    DEFAULT_GATE,
    GateSpec,
    IDENTITY,
    X_PI,
    PrimitiveSegment,
    Schedule,
    balance_pair,
    build_gate,
    edd_schedule,
    flatten,
    noop_segment,
    primitive,
    same_up_to_phase,
)


def error_from(h_e: Operator) -> ErrorHamiltonian:
    """Wrap a bare operator as an error Hamiltonian with no drift term."""
    zeros = Operator.zeros(h_e.dim_s, h_e.dim_b)
    return ErrorHamiltonian(
        h_e=h_e, h_sb=mod_b(h_e), h_b=h_e - mod_b(h_e), h_se=zeros,
        norm_he=spectral_norm(h_e), norm_err=spectral_norm(mod_b(h_e)), couplings={},
    )


def dephasing(b: float) -> Operator:
    return tensor(PAULI['Z'], PAULI['Z']) * b


def log_slope(x, y) -> float:
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


class TestSegmentPropagator:
    """Exact single-segment propagators."""

    def test_no_error_gives_control_rotation(self):
        u = segment_propagator(PrimitiveSegment(X_PI.axis, X_PI.angle, 0.1), Operator.zeros(2, 4))
        assert same_up_to_phase(u.matrix, np.kron(PAULI['X'], np.eye(4)))

    def test_noop_is_free_evolution(self):
        h_e = assemble(SpinBathSpec(n_bath=2, seed=4)).h_e
        u = segment_propagator(noop_segment(0.02), h_e)
        assert u.allclose(matexp(h_e, 0.02), atol=1e-13)

    def test_matches_product_formula(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h_e = Operator((a + a.conj().T) / 2, 2, 2)
        h_e = h_e * (0.3 / spectral_norm(h_e))
        seg = PrimitiveSegment((0.0, 0.6, 0.8), 0.1, 0.02)
        steps = 1000
        dt = seg.duration / steps
        step = (matexp(on_system(seg.hamiltonian(), 2), dt).matrix
                @ matexp(h_e, dt).matrix)
        oracle = np.linalg.matrix_power(step, steps)
        assert np.linalg.norm(segment_propagator(seg, h_e).matrix - oracle, 2) <= 1e-6


class TestRunSchedule:
    """Time ordering and caching of schedules."""

    def test_inverse_pair_is_identity(self):
        schedule = Schedule((
            PrimitiveSegment(DEFAULT_GATE.axis, DEFAULT_GATE.angle, 0.3),
            PrimitiveSegment(DEFAULT_GATE.axis, -DEFAULT_GATE.angle, 0.3),
        ))
        u = run_schedule(schedule, Operator.zeros(2, 2))
        assert same_up_to_phase(u.matrix, np.eye(4))

    def test_later_segments_on_the_left(self):
        schedule = flatten(primitive(X_PI)) + Schedule((PrimitiveSegment(DEFAULT_GATE.axis, 0.7, 1.0),))
        u = run_schedule(schedule, Operator.zeros(2, 1))
        expected = GateSpec(DEFAULT_GATE.axis, 0.7).unitary() @ X_PI.unitary()
        assert np.allclose(u.matrix, expected)

    @pytest.mark.parametrize('pieces', [2, 3, 5])
    def test_subdivided_segment_is_exact(self, pieces):
        h_e = assemble(SpinBathSpec(n_bath=2, seed=7)).h_e
        seg = PrimitiveSegment(DEFAULT_GATE.axis, DEFAULT_GATE.angle, 1e-3)
        split = Schedule(tuple(
            PrimitiveSegment(seg.axis, seg.angle / pieces, seg.duration / pieces) for _ in range(pieces)
        ))
        assert split.segments[0].amplitude == pytest.approx(seg.amplitude)
        whole = run_schedule(Schedule((seg,)), h_e)
        assert np.linalg.norm(run_schedule(split, h_e).matrix - whole.matrix, 2) < 1e-12

    def test_empty_schedule_rejected(self):
        with pytest.raises(ValueError):
            run_schedule(Schedule(()), Operator.zeros(2, 2))


class TestTogglingFrame:
    """Propagation split into ideal control and error deviation."""

    def test_unitary_matches_ordered_product(self):
        h_e = assemble(SpinBathSpec(n_bath=2, seed=3)).h_e
        schedule = flatten(build_gate(DEFAULT_GATE, 1), 1.0, 1e-3)
        product = np.eye(h_e.dim, dtype=complex)
        for seg in schedule.segments:
            product = segment_propagator(seg, h_e).matrix @ product
        assert np.allclose(toggling_frame(schedule, h_e).unitary().matrix, product, atol=1e-12)

    def test_deviation_bounded_by_error_strength(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=3))
        schedule = flatten(build_gate(DEFAULT_GATE, 2), 1.0, 1e-4)
        frame = toggling_frame(schedule, err.h_e)
        bound = err.norm_he * schedule.total_duration
        assert np.linalg.norm(frame.deviation, 2) <= bound + 1e-12

    def test_no_error_is_exact_at_level_three(self):
        schedule = flatten(build_gate(DEFAULT_GATE, 3), 1.0, 1e-3)
        result = evaluate(SimulationConfig(schedule=schedule, error=error_from(Operator.zeros(2, 2)),
                                           target=DEFAULT_GATE, level=3, tau_min=1e-3))
        assert result.epg_eta <= 1e-14
        assert result.infidelity <= 1e-30
        assert result.trace_dist <= 1e-15

    def test_mismatched_target_falls_back_to_full_unitary(self):
        h_e = assemble(SpinBathSpec(n_bath=1, seed=5)).h_e
        frame = toggling_frame(flatten(primitive(DEFAULT_GATE), 1.0, 1e-3), h_e)
        assert np.allclose(target_frame(frame, X_PI), target_frame(frame.unitary(), X_PI), atol=1e-12)

    def test_error_action_agrees_with_full_unitary(self):
        h_e = assemble(SpinBathSpec(n_bath=2, seed=9)).h_e
        frame = toggling_frame(flatten(build_gate(DEFAULT_GATE, 1), 1.0, 1e-3), h_e)
        from_frame, eta = error_action(frame, DEFAULT_GATE)
        from_unitary, eta_unitary = error_action(frame.unitary(), DEFAULT_GATE)
        assert from_frame.allclose(from_unitary, atol=1e-12)
        assert eta == pytest.approx(eta_unitary, abs=1e-12)


class TestErrorAction:
    """Extraction of eta."""

    def test_pure_bath_evolution_has_no_error(self):
        h_b = assemble(SpinBathSpec(n_bath=2, seed=6)).h_b
        q = DEFAULT_GATE.unitary()
        u = on_system(q, 4) @ matexp(h_b, 0.7)
        _, eta = error_action(u, DEFAULT_GATE)
        assert eta <= 1e-10

    def test_single_coupling_term(self):
        rng = np.random.default_rng(5)
        b = rng.normal(size=(2, 2))
        b = (b + b.T) / 2
        coupling = tensor(PAULI['Z'], b)
        s = 1e-3
        u = on_system(DEFAULT_GATE.unitary(), 2) @ matexp(coupling, s)
        _, eta = error_action(u, DEFAULT_GATE)
        assert eta == pytest.approx(s * spectral_norm(coupling), rel=1e-6)

    def test_global_phase_ignored(self):
        u = on_system(np.exp(0.4j) * DEFAULT_GATE.unitary(), 2)
        _, eta = error_action(u, DEFAULT_GATE)
        assert eta <= 1e-12


class TestEvaluate:
    """Figures of merit of full simulations."""

    def test_no_error(self):
        err = assemble(SpinBathSpec(n_bath=1, j_values=(0.0,)))
        schedule = flatten(build_gate(DEFAULT_GATE, 1), 1.0, 0.01)
        result = evaluate(SimulationConfig(schedule=schedule, error=err, target=DEFAULT_GATE))
        assert result.fid == pytest.approx(1.0, abs=1e-10)
        assert result.trace_dist == pytest.approx(0.0, abs=1e-10)
        assert result.epg_eta <= 1e-10

    @pytest.mark.parametrize('s', [1e-3, 1e-2, 0.1, 0.4])
    def test_dephasing_closed_form(self, s):
        b = 0.8
        cfg = SimulationConfig(
            schedule=Schedule((noop_segment(s),)),
            error=error_from(dephasing(b)),
            target=IDENTITY,
            bath_state=DensityMatrix.from_pure([1, 0]),
        )
        result = evaluate(cfg)
        assert result.trace_dist == pytest.approx(2 * abs(math.sin(s * b)), abs=1e-12)
        assert result.epg_eta == pytest.approx(s * b, rel=1e-9)
        assert result.fid == pytest.approx(abs(math.cos(s * b)), abs=1e-12)
        assert check_bound_chain(result).ok

    def test_mixed_bath_coherence_decay(self):
        couplings = np.array([0.5, -1.3])
        s = 0.2
        cfg = SimulationConfig(
            schedule=Schedule((noop_segment(s),)),
            error=error_from(tensor(PAULI['Z'], np.diag(couplings))),
            target=IDENTITY,
        )
        result = evaluate(cfg)
        expected = math.sqrt((1 + np.mean(np.cos(2 * s * couplings))) / 2)
        assert result.fid == pytest.approx(expected, abs=1e-12)

    def test_tiny_dephasing_infidelity_resolved(self):
        angle = 1e-7
        cfg = SimulationConfig(
            schedule=Schedule((noop_segment(1.0),)),
            error=error_from(dephasing(angle)),
            target=IDENTITY,
            bath_state=DensityMatrix.from_pure([1, 0]),
        )
        result = evaluate(cfg)
        assert result.infidelity == pytest.approx(1.0 - math.cos(angle), rel=1e-6)
        assert result.trace_dist == pytest.approx(2 * math.sin(angle), rel=1e-9)

    def test_upper_bound_tight_for_pure_bath(self):
        angle = 1e-4
        cfg = SimulationConfig(
            schedule=Schedule((noop_segment(1.0),)),
            error=error_from(dephasing(angle)),
            target=IDENTITY,
            bath_state=DensityMatrix.from_pure([1, 0]),
        )
        result = evaluate(cfg)
        chain = check_bound_chain(result)
        assert result.normalized_distance == pytest.approx(math.sin(angle), rel=1e-9)
        assert chain.upper_margin == pytest.approx(0.0, abs=1e-15)
        assert result.fid < 1.0 - 4e-9
        assert chain.lower_margin > 9e-5

    def test_upper_bound_margin_for_mixed_bath(self):
        couplings = np.array([0.5, -1.3])
        s = 2.5e-4
        cfg = SimulationConfig(
            schedule=Schedule((noop_segment(s),)),
            error=error_from(tensor(PAULI['Z'], np.diag(couplings))),
            target=IDENTITY,
        )
        result = evaluate(cfg)
        x = np.mean(np.cos(2 * s * couplings))
        y = np.mean(np.sin(2 * s * couplings))
        distance = 0.5 * math.sqrt((1 - x) ** 2 + y ** 2)
        fid = math.sqrt((1 + x) / 2)
        chain = check_bound_chain(result)
        assert result.trace_dist == pytest.approx(2 * distance, rel=1e-7)
        assert result.normalized_distance == pytest.approx(1e-4, rel=0.05)
        assert chain.upper_margin == pytest.approx(math.sqrt(1 - distance ** 2) - fid, rel=1e-5)
        assert 0 < chain.upper_margin < 1e-3 * chain.lower_margin

    def test_bound_chain_in_experiment_regime(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=1))
        for level in (0, 1):
            for tau in (1e-4, 1e-3):
                schedule = flatten(build_gate(DEFAULT_GATE, level), 1.0, tau)
                result = evaluate(SimulationConfig(schedule=schedule, error=err, target=DEFAULT_GATE,
                                                   level=level, tau_min=tau))
                assert check_bound_chain(result).ok
                assert result.normalized_distance <= result.epg_eta + 1e-9

    def test_state_independence(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=2))
        schedule = flatten(build_gate(DEFAULT_GATE, 1), 1.0, 1e-3)
        u = run_schedule(schedule, err.h_e)
        _, eta = error_action(u, DEFAULT_GATE)
        assert max_state_distance(u, DEFAULT_GATE, n_states=20) <= eta + 1e-9

    def test_bad_initial_state(self):
        err = assemble(SpinBathSpec(n_bath=1))
        with pytest.raises(ValueError):
            SimulationConfig(schedule=flatten(primitive(X_PI)), error=err, target=X_PI,
                             initial_system_state=np.ones(4))


class TestDecouplingSequences:
    """Eulerian decoupling against free evolution."""

    def test_edd_beats_free_evolution_with_higher_slope(self):
        rng = np.random.default_rng(8)
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        b = (b + b.conj().T) / 2
        h_e = tensor(PAULI['Z'], b / np.linalg.norm(b, 2))
        taus = np.array([1e-3, 2e-3, 4e-3, 8e-3])
        edd, free = [], []
        for tau in taus:
            schedule = edd_schedule(tau0=tau, free_time=tau)
            _, eta = error_action(run_schedule(schedule, h_e), IDENTITY)
            edd.append(eta)
            free.append(free_evolution_eta(h_e, schedule.total_duration))
        assert all(e < f for e, f in zip(edd, free))
        assert log_slope(taus, free) == pytest.approx(1.0, abs=0.1)
        assert log_slope(taus, edd) >= 1.7


class TestComposition:
    """First-order composition of sub-gate errors."""

    def test_single_gate(self):
        err = assemble(SpinBathSpec(n_bath=1, seed=3))
        schedule = flatten(primitive(DEFAULT_GATE), 1.0, 1e-2)
        composed = compose_first_order([(schedule, DEFAULT_GATE)], err.h_e)
        exact, _ = error_action(run_schedule(schedule, err.h_e), DEFAULT_GATE)
        assert composed.allclose(exact, atol=1e-12)

    def test_commuting_errors_compose_exactly(self):
        h_e = tensor(PAULI['Z'], np.diag([0.4, -0.9]))
        first = Schedule((noop_segment(0.1),))
        second = Schedule((noop_segment(0.25),))
        composed = compose_first_order([(first, IDENTITY), (second, IDENTITY)], h_e)
        exact, _ = error_action(run_schedule(first + second, h_e), IDENTITY)
        assert composed.allclose(exact, atol=1e-10)

    def test_two_primitives_second_order_residual(self):
        err = assemble(SpinBathSpec(n_bath=1, j_values=(1.0,), h_drift=(0.2, 0.0, 0.1)))
        rng = np.random.default_rng(12)
        taus = np.array([1e-3, 2e-3, 4e-3, 8e-3])
        for _ in range(20):
            gates = []
            for _ in range(2):
                axis = rng.normal(size=3)
                gates.append(GateSpec(tuple(axis / np.linalg.norm(axis)), rng.uniform(0.3, 2.5)))
            residuals = []
            for tau in taus:
                parts = [(flatten(primitive(gate), 1.0, tau), gate) for gate in gates]
                composed = compose_first_order(parts, err.h_e)
                whole = parts[0][0] + parts[1][0]
                exact, _ = error_action(run_schedule(whole, err.h_e), composite_target(gates))
                residuals.append(spectral_norm(exact - composed))
            assert log_slope(taus, residuals) == pytest.approx(2.0, abs=0.2)


@pytest.mark.slow
class TestBalanceProperty:
    """Balance pairs agree beyond the order of their building blocks."""

    @pytest.mark.parametrize('level', [0, 1])
    def test_balance_mismatch_slope(self, level):
        err = assemble(SpinBathSpec(n_bath=2, j_max=10.0, b_max=1e-2, seed=1))
        q = build_gate(DEFAULT_GATE, level)
        i_q, q_star = balance_pair(q)
        taus = 10.0 ** np.linspace(-4.0, -2.5, 6) / 10.0
        mismatch = []
        for tau in taus:
            e_identity, _ = error_action(run_schedule(flatten(i_q, 1.0, tau), err.h_e), IDENTITY)
            e_target, _ = error_action(run_schedule(flatten(q_star, 1.0, tau), err.h_e), DEFAULT_GATE)
            mismatch.append(spectral_norm(mod_b(e_identity) - mod_b(e_target)))
        assert log_slope(taus, mismatch) >= level + 2 - 0.3
