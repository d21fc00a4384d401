#!/usr/bin/env python3
"""
Tests for slope fits and the analytic error-per-gate envelope.
"""

import math

import numpy as np
import pandas as pd
import pytest

from analysis import (
    FitWindowError,
    bound_ratios,
    bound_report,
    bound_violations,
    envelope,
    fit_slope,
    fit_slopes,
    optimal_level,
)
from errmodel import SpinBathSpec, assemble


def power_law_frame(level: int, exponent: float, taus, seed: int = 1) -> pd.DataFrame:
    taus = np.asarray(taus, dtype=float)
    return pd.DataFrame({
        'level': level,
        'tau_min': taus,
        'eta': taus ** exponent,
        'seed': seed,
        'branch_error': 0,
    })


class TestFitSlope:
    """Log-log least squares."""

    def test_exact_power_law(self):
        frame = power_law_frame(0, 2.0, np.logspace(-5, -2, 7))
        fit = fit_slope(frame, 0)
        assert fit.slope == pytest.approx(2.0, abs=1e-9)
        assert fit.residual == pytest.approx(0.0, abs=1e-9)
        assert fit.n_points == 7

    def test_points_outside_window_dropped(self):
        frame = power_law_frame(1, 1.0, np.logspace(-6, 0, 13))
        fit = fit_slope(frame, 1)
        assert fit.n_points == 9
        assert fit.slope == pytest.approx(1.0, abs=1e-9)

    def test_flagged_rows_ignored(self):
        frame = power_law_frame(0, 3.0, np.logspace(-3, -1, 6))
        frame.loc[0, 'branch_error'] = 1
        frame.loc[0, 'eta'] = math.nan
        assert fit_slope(frame, 0).n_points == 5

    def test_too_few_points(self):
        frame = power_law_frame(2, 3.0, [1e-3, 2e-3, 4e-3])
        with pytest.raises(FitWindowError) as info:
            fit_slope(frame, 2)
        assert info.value.level == 2
        assert info.value.found == 3

    def test_per_level(self):
        frame = pd.concat([
            power_law_frame(0, 1.0, np.logspace(-4, -2, 5)),
            power_law_frame(1, 2.0, np.logspace(-4, -2, 5)),
        ], ignore_index=True)
        fits = fit_slopes(frame)
        assert sorted(fits) == [0, 1]
        assert fits[1].slope == pytest.approx(2.0, abs=1e-9)


class TestOptimalLevel:
    """Optimal concatenation level."""

    def test_no_benefit_clamped(self):
        assert optimal_level(1.0, 0.25, 20.0) == 0

    def test_small_product(self):
        assert optimal_level(1.0, 1e-6, 20.0) == 1

    def test_zero_error(self):
        assert optimal_level(0.0, 1e-3, 20.0) == 0

    def test_deeper_levels_for_smaller_tau(self):
        assert optimal_level(1.0, 1e-12, 20.0) >= 3


class TestEnvelope:
    """Closed-form bound."""

    def test_level_zero_is_primitive_error(self):
        assert envelope(0, 5.0, 2.0, 1e-3, 20.0) == pytest.approx(2e-3)

    def test_level_two(self):
        expected = 20.0 ** 4 * 1e-4 * 2.0 * (4 * 20.0 * 1e-4 * 5.0) ** 2
        assert envelope(2, 5.0, 2.0, 1e-4, 20.0) == pytest.approx(expected)

    def test_report(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=1))
        report = bound_report(err, 1e-5, [2, 0, 1])
        assert report.levels == (0, 1, 2)
        assert report.chi == 20.0
        assert report.primitive_epg == pytest.approx(err.norm_err * 1e-5)
        assert report.bound(0) == pytest.approx(report.primitive_epg)
        assert report.duration_factors[0] == pytest.approx(20.0)
        assert len(report.duration_factors) == 2
        assert report.l_opt == optimal_level(err.norm_he, 1e-5, 20.0)

    def test_report_rejects_bad_tau(self):
        err = assemble(SpinBathSpec(n_bath=1))
        with pytest.raises(ValueError):
            bound_report(err, 0.0, [0])


class TestBoundRatios:
    """Measured eta against the envelope."""

    def test_ratio_column(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=1))
        frame = power_law_frame(0, 1.0, [1e-4, 1e-3])
        frame['eta'] = frame['tau_min'] * err.norm_err * 0.5
        annotated = bound_ratios(frame, {1: err})
        assert np.allclose(annotated['eta_over_bound'], 0.5)
        assert bound_violations(annotated).empty

    def test_violation_reported(self):
        err = assemble(SpinBathSpec(n_bath=2, seed=1))
        frame = power_law_frame(0, 1.0, [1e-4])
        frame['eta'] = frame['tau_min'] * err.norm_err * 2.0
        annotated = bound_ratios(frame, {1: err})
        assert len(bound_violations(annotated)) == 1
