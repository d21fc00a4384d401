"""
Analysis of sweep datasets: log-log slope fits of eta against tau_min and
the analytic error-per-gate envelope with its optimal concatenation level.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from errmodel import ErrorHamiltonian
from synth import DecouplingGroup, pauli_group

logger = logging.getLogger(__name__)

FIT_WINDOW = (1e-13, 1e-2)
MIN_FIT_POINTS = 4


class FitWindowError(ValueError):
    """Not enough in-window points to fit a level."""

    def __init__(self, level: int, found: int, needed: int = MIN_FIT_POINTS):
        self.level = level
        self.found = found
        super().__init__(
            f"Level {level}: {found} points with eta in [{FIT_WINDOW[0]:g}, {FIT_WINDOW[1]:g}], "
            f"need at least {needed}"
        )


@dataclass(frozen=True)
class SlopeFit:
    level: int
    slope: float
    intercept: float
    residual: float
    n_points: int


@dataclass(frozen=True)
class BoundReport:
    """Analytic envelope of the error per gate, with c = 1."""

    chi: float
    norm_he: float
    norm_err: float
    tau0: float
    levels: Tuple[int, ...]
    bound_per_level: Tuple[float, ...]
    l_opt: int
    duration_factors: Tuple[float, ...] = field(default=())
    c: float = 1.0

    @property
    def primitive_epg(self) -> float:
        return self.norm_err * self.tau0

    def bound(self, level: int) -> float:
        return self.bound_per_level[self.levels.index(level)]


def _in_window(frame: pd.DataFrame, window: Tuple[float, float]) -> pd.DataFrame:
    usable = frame
    if 'branch_error' in usable.columns:
        usable = usable[usable['branch_error'] == 0]
    eta = usable['eta']
    return usable[np.isfinite(eta) & (eta >= window[0]) & (eta <= window[1])]


def fit_slope(dataset: pd.DataFrame, level: int,
              window: Tuple[float, float] = FIT_WINDOW,
              min_points: int = MIN_FIT_POINTS) -> SlopeFit:
    """Least-squares slope of log10(eta) against log10(tau_min) for one level."""
    rows = _in_window(dataset[dataset['level'] == level], window)
    if len(rows) < min_points:
        raise FitWindowError(level, len(rows), min_points)
    x = np.log10(rows['tau_min'].to_numpy(dtype=float))
    y = np.log10(rows['eta'].to_numpy(dtype=float))
    (slope, intercept), residuals, *_ = np.polyfit(x, y, 1, full=True)
    residual = math.sqrt(float(residuals[0]) / len(rows)) if len(residuals) else 0.0
    return SlopeFit(level, float(slope), float(intercept), residual, len(rows))


def fit_slopes(dataset: pd.DataFrame, levels: Optional[Iterable[int]] = None,
               window: Tuple[float, float] = FIT_WINDOW) -> Dict[int, SlopeFit]:
    """Per-level slope estimates; raises FitWindowError for the first starved level."""
    if levels is None:
        levels = sorted(int(level) for level in dataset['level'].unique())
    return {level: fit_slope(dataset, level, window) for level in levels}


def optimal_level(norm_he: float, tau0: float, chi: float) -> int:
    """floor(-(log_chi(4 ||H_e|| tau0) + 1) / 2), clamped at 0."""
    scale = 4.0 * norm_he * tau0
    if scale <= 0:
        return 0
    value = -0.5 * (math.log(scale) / math.log(chi) + 1.0)
    return max(0, math.floor(value))


def envelope(level: int, norm_he: float, norm_err: float, tau0: float,
             chi: float, c: float = 1.0) -> float:
    """c chi^(l^2) tau0 ||H_SB + H_Se|| (4 chi tau0 ||H_e||)^l."""
    return c * chi ** (level * level) * tau0 * norm_err * (4.0 * chi * tau0 * norm_he) ** level


def bound_report(err: ErrorHamiltonian, tau0: float, levels: Iterable[int],
                 group: Optional[DecouplingGroup] = None, c: float = 1.0) -> BoundReport:
    if tau0 <= 0:
        raise ValueError(f"tau0 must be positive, got {tau0}")
    group = group or pauli_group()
    levels = tuple(sorted(set(int(level) for level in levels)))
    chi = group.chi
    bounds = tuple(envelope(level, err.norm_he, err.norm_err, tau0, chi, c) for level in levels)
    factors = tuple(group.duration_factor(k) for k in range(max(levels, default=0)))
    return BoundReport(
        chi=chi,
        norm_he=err.norm_he,
        norm_err=err.norm_err,
        tau0=tau0,
        levels=levels,
        bound_per_level=bounds,
        l_opt=optimal_level(err.norm_he, tau0, chi),
        duration_factors=factors,
        c=c,
    )


def bound_ratios(dataset: pd.DataFrame, errors: Mapping[int, ErrorHamiltonian],
                 group: Optional[DecouplingGroup] = None) -> pd.DataFrame:
    """Dataset copy with the envelope per row and the measured eta / envelope ratio."""
    chi = (group or pauli_group()).chi
    bounds: List[float] = []
    for level, tau_min, seed in zip(dataset['level'], dataset['tau_min'], dataset['seed']):
        err = errors[int(seed)]
        bounds.append(envelope(int(level), err.norm_he, err.norm_err, float(tau_min), chi))
    annotated = dataset.copy()
    annotated['bound'] = bounds
    with np.errstate(divide='ignore', invalid='ignore'):
        annotated['eta_over_bound'] = annotated['eta'] / annotated['bound']
    return annotated


def bound_violations(annotated: pd.DataFrame) -> pd.DataFrame:
    """Rows where the envelope is non-vacuous (< 1) yet eta reaches it."""
    informative = annotated[(annotated['bound'] < 1.0) & np.isfinite(annotated['eta'])]
    return informative[informative['eta'] >= informative['bound']]
