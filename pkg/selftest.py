#!/usr/bin/env python3
"""
Invariant suite for the DCG toolkit that runs without pytest.

Checks the construction and the operator algebra on small inputs; the
scaling experiments live in the slow pytest suite.
"""

import sys
import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from opalg import Operator, matexp, matlog_unitary, mod_b, spectral_norm, tensor
from errmodel import PAULI
from synth import (
    DEFAULT_GATE,
    build_gate,
    duration,
    eulerian_cycle,
    flatten,
    group_average,
    pauli_group,
    same_up_to_phase,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2.0


def check_edd_word() -> Tuple[bool, str]:
    group = pauli_group()
    word = ''.join(group.generator_labels[i] for i in eulerian_cycle(group))
    return word == 'XYXYYXYX', f"word {word}"


def check_decoupling() -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    group = pauli_group()
    worst = 0.0
    for _ in range(50):
        bath = _random_hermitian(rng, 8)
        for label in ('X', 'Y', 'Z'):
            averaged = group_average(group, tensor(PAULI[label], bath))
            worst = max(worst, spectral_norm(mod_b(averaged)))
    return worst <= 1e-12, f"max ||mod_B(Pi_D[sigma (x) B])|| = {worst:.2e}"


def check_durations() -> Tuple[bool, str]:
    worst = 0.0
    for level in range(5):
        schedule = flatten(build_gate(DEFAULT_GATE, level), 1.0, 1.0)
        expected = duration(level, 1.0)
        worst = max(worst, abs(schedule.total_duration - expected) / expected)
    factor = duration(3, 1.0)
    ok = worst <= 1e-12 and 6.4e3 < factor < 6.5e3
    return ok, f"max relative error {worst:.1e}, level-3 factor {factor:.1f}"


def check_targets() -> Tuple[bool, str]:
    failures = []
    for level in range(3):
        schedule = flatten(build_gate(DEFAULT_GATE, level))
        if not same_up_to_phase(schedule.control_unitary(), DEFAULT_GATE.unitary(), 1e-9):
            failures.append(level)
        if schedule.max_amplitude > abs(np.pi) / 2.0 + 1e-12:
            failures.append(level)
    return not failures, f"failing levels {failures}" if failures else "levels 0..2 reach the target"


def check_exponentials() -> Tuple[bool, str]:
    rng = np.random.default_rng(11)
    h = _random_hermitian(rng, 16)
    h = Operator(h / np.linalg.norm(h, 2), 2, 8)
    u = matexp(h, 2.5)
    unitarity = np.linalg.norm(u.matrix.conj().T @ u.matrix - np.eye(16), 2)
    round_trip = spectral_norm(matlog_unitary(u) - h * 2.5)
    return unitarity <= 1e-10 and round_trip <= 1e-9, f"unitarity {unitarity:.1e}, log round trip {round_trip:.1e}"


def check_projector() -> Tuple[bool, str]:
    rng = np.random.default_rng(13)
    e = Operator(_random_hermitian(rng, 16), 2, 8)
    idempotence = spectral_norm(mod_b(mod_b(e)) - mod_b(e))
    pure_bath = spectral_norm(mod_b(tensor(np.eye(2), _random_hermitian(rng, 8))))
    return idempotence <= 1e-12 and pure_bath <= 1e-12, f"idempotence {idempotence:.1e}, pure bath {pure_bath:.1e}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ('EDD word', check_edd_word),
    ('Pauli decoupling', check_decoupling),
    ('Duration identity', check_durations),
    ('Target consistency', check_targets),
    ('Exponential and logarithm', check_exponentials),
    ('mod_B projector', check_projector),
]


def run_selftest() -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"raised {type(e).__name__}: {e}"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results


def main():
    print("Running DCG invariant suite...")
    results = run_selftest()
    for result in results:
        mark = '✓' if result.passed else '✗'
        print(f"  {mark} {result.name:<28} {result.detail} ({result.seconds:.2f}s)")
    failed = sum(not result.passed for result in results)
    print(f"\n{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


if __name__ == '__main__':
    sys.exit(main())
