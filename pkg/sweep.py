"""
Sweep orchestration

Loads a sweep configuration, simulates every (level, tau_min, seed) point
and writes a deterministic CSV dataset.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from tqdm import tqdm

from errmodel import MAX_BATH_SPINS, ErrorHamiltonian, SpinBathSpec, assemble
from opalg import BranchAmbiguityError
from sim import SimulationConfig, evaluate
from synth import DEFAULT_GATE, GateSpec, Schedule, Synthesizer, flatten

logger = logging.getLogger(__name__)

MAX_LEVEL = 4
CSV_COLUMNS = [
    'level', 'tau_min', 'tau_min_J', 'total_duration', 'eta', 'trace_dist',
    'fidelity', 'log10_infidelity', 'seed', 'branch_error',
]
FLOAT_FORMAT = '%.16e'
_TOP_LEVEL_KEYS = ('bath', 'gate', 'levels', 'tau_grid', 'replicates', 'workers', 'output_path')
_BATH_KEYS = ('n_bath', 'j_max', 'b_max', 'seed', 'h_drift')
_GATE_KEYS = ('axis', 'angle')
_GRID_KEYS = ('log10_start', 'log10_stop', 'points')


class ConfigError(ValueError):
    """Schema violation in a sweep configuration."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class TauGrid:
    """Grid of log10(tau_min * J) values."""

    log10_start: float = -6.0
    log10_stop: float = -2.0
    points: int = 9

    def tau_j_values(self) -> np.ndarray:
        return 10.0 ** np.linspace(self.log10_start, self.log10_stop, self.points)


@dataclass(frozen=True)
class SweepConfig:
    bath: SpinBathSpec = field(default_factory=SpinBathSpec)
    gate: GateSpec = DEFAULT_GATE
    levels: Tuple[int, ...] = (0, 1, 2, 3)
    tau_grid: TauGrid = field(default_factory=TauGrid)
    replicates: int = 1
    workers: int = 1
    output_path: str = 'dcg_sweep.csv'

    @property
    def seeds(self) -> List[int]:
        return [self.bath.seed + k for k in range(self.replicates)]

    def tau_values(self) -> List[Tuple[float, float]]:
        """(tau_min * J, tau_min) pairs of the grid."""
        return [(float(tj), float(tj) / self.bath.j_max) for tj in self.tau_grid.tau_j_values()]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        number = float(value)
    elif isinstance(value, str):
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    else:
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(number):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    return number


def _integer(value: Any, path: str) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    number = _number(value, path)
    if number != int(number):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return int(number)


def _section(doc: Dict[str, Any], key: str, allowed: Sequence[str]) -> Dict[str, Any]:
    section = doc.get(key, {})
    if section is None:
        section = {}
    if not isinstance(section, dict):
        raise ConfigError(key, "expected an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}", "unknown field")
    return section


def _parse_bath(doc: Dict[str, Any]) -> SpinBathSpec:
    section = _section(doc, 'bath', _BATH_KEYS)
    defaults = SpinBathSpec()
    n_bath = _integer(section.get('n_bath', defaults.n_bath), 'bath.n_bath')
    if not 1 <= n_bath <= MAX_BATH_SPINS:
        raise ConfigError('bath.n_bath', f"must be in 1..{MAX_BATH_SPINS}, got {n_bath}")
    j_max = _number(section.get('j_max', defaults.j_max), 'bath.j_max')
    if j_max <= 0:
        raise ConfigError('bath.j_max', f"must be positive, got {j_max}")
    b_max = _number(section.get('b_max', defaults.b_max), 'bath.b_max')
    if b_max < 0:
        raise ConfigError('bath.b_max', f"must be non-negative, got {b_max}")
    seed = _integer(section.get('seed', defaults.seed), 'bath.seed')
    if not 0 <= seed < 2 ** 64:
        raise ConfigError('bath.seed', f"must be a 64-bit unsigned integer, got {seed}")
    drift = section.get('h_drift', list(defaults.h_drift))
    if not isinstance(drift, (list, tuple)) or len(drift) != 3:
        raise ConfigError('bath.h_drift', "expected a list of three numbers")
    h_drift = tuple(_number(h, f'bath.h_drift[{i}]') for i, h in enumerate(drift))
    return SpinBathSpec(n_bath=n_bath, j_max=j_max, b_max=b_max, seed=seed, h_drift=h_drift)


def _parse_gate(doc: Dict[str, Any]) -> GateSpec:
    section = _section(doc, 'gate', _GATE_KEYS)
    axis = section.get('axis', list(DEFAULT_GATE.axis))
    if not isinstance(axis, (list, tuple)) or len(axis) != 3:
        raise ConfigError('gate.axis', "expected a list of three numbers")
    axis = [_number(a, f'gate.axis[{i}]') for i, a in enumerate(axis)]
    norm = math.sqrt(sum(a * a for a in axis))
    if norm == 0:
        raise ConfigError('gate.axis', "must not be the zero vector")
    if abs(norm - 1.0) > 1e-12:
        axis = [a / norm for a in axis]
    angle = _number(section.get('angle', DEFAULT_GATE.angle), 'gate.angle')
    return GateSpec(tuple(axis), angle)


def _parse_levels(doc: Dict[str, Any]) -> Tuple[int, ...]:
    levels = doc.get('levels', list(SweepConfig.levels))
    if not isinstance(levels, (list, tuple)) or not levels:
        raise ConfigError('levels', "expected a non-empty list of integers")
    parsed = []
    for i, level in enumerate(levels):
        level = _integer(level, f'levels[{i}]')
        if not 0 <= level <= MAX_LEVEL:
            raise ConfigError(
                f'levels[{i}]',
                f"must be in 0..{MAX_LEVEL} (a level-l gate has 17^l segments), got {level}",
            )
        parsed.append(level)
    return tuple(sorted(set(parsed)))


def _parse_grid(doc: Dict[str, Any]) -> TauGrid:
    section = _section(doc, 'tau_grid', _GRID_KEYS)
    defaults = TauGrid()
    start = _number(section.get('log10_start', defaults.log10_start), 'tau_grid.log10_start')
    stop = _number(section.get('log10_stop', defaults.log10_stop), 'tau_grid.log10_stop')
    points = _integer(section.get('points', defaults.points), 'tau_grid.points')
    if points < 2:
        raise ConfigError('tau_grid.points', f"must be at least 2, got {points}")
    if not start < stop:
        raise ConfigError('tau_grid.log10_start', f"must be below log10_stop ({start} >= {stop})")
    return TauGrid(start, stop, points)


def config_from_dict(doc: Optional[Dict[str, Any]]) -> SweepConfig:
    """Validate a configuration document and fill in defaults."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError('', "configuration must be an object")
    unknown = sorted(set(doc) - set(_TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown field")

    replicates = _integer(doc.get('replicates', 1), 'replicates')
    if replicates < 1:
        raise ConfigError('replicates', f"must be at least 1, got {replicates}")
    workers = _integer(doc.get('workers', 1), 'workers')
    if workers < 1:
        raise ConfigError('workers', f"must be at least 1, got {workers}")
    output_path = doc.get('output_path', SweepConfig.output_path)
    if not isinstance(output_path, str) or not output_path:
        raise ConfigError('output_path', "expected a non-empty string")

    bath = _parse_bath(doc)
    if bath.seed + replicates - 1 >= 2 ** 64:
        raise ConfigError('replicates', "seed range exceeds 64 bits")
    return SweepConfig(
        bath=bath,
        gate=_parse_gate(doc),
        levels=_parse_levels(doc),
        tau_grid=_parse_grid(doc),
        replicates=replicates,
        workers=workers,
        output_path=output_path,
    )


def load_config(path: Union[str, Path]) -> SweepConfig:
    """Load and validate a sweep configuration (JSON, or YAML by suffix)."""
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as file:
        text = file.read()
    try:
        if path.suffix.lower() in ('.yaml', '.yml'):
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text) if text.strip() else {}
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError('', f"cannot parse {path}: {e}") from e
    return config_from_dict(doc)


def serialize_config(cfg: SweepConfig) -> Dict[str, Any]:
    """Normalized configuration document."""
    return {
        'bath': {
            'n_bath': cfg.bath.n_bath,
            'j_max': cfg.bath.j_max,
            'b_max': cfg.bath.b_max,
            'seed': cfg.bath.seed,
            'h_drift': list(cfg.bath.h_drift),
        },
        'gate': {'axis': list(cfg.gate.axis), 'angle': cfg.gate.angle},
        'levels': list(cfg.levels),
        'tau_grid': {
            'log10_start': cfg.tau_grid.log10_start,
            'log10_stop': cfg.tau_grid.log10_stop,
            'points': cfg.tau_grid.points,
        },
        'replicates': cfg.replicates,
        'workers': cfg.workers,
        'output_path': cfg.output_path,
    }


def dump_config(cfg: SweepConfig, path: Union[str, Path]):
    with open(path, 'w', encoding='utf-8') as file:
        json.dump(serialize_config(cfg), file, indent=2)
        file.write('\n')


def apply_overrides(cfg: SweepConfig, seed: Optional[int] = None, levels: Optional[Sequence[int]] = None,
                    tau_points: Optional[int] = None, workers: Optional[int] = None,
                    output: Optional[str] = None) -> SweepConfig:
    """Apply command-line overrides and re-validate."""
    doc = serialize_config(cfg)
    if seed is not None:
        doc['bath']['seed'] = seed
    if levels is not None:
        doc['levels'] = list(levels)
    if tau_points is not None:
        doc['tau_grid']['points'] = tau_points
    if workers is not None:
        doc['workers'] = workers
    if output is not None:
        doc['output_path'] = output
    return config_from_dict(doc)


def _row(level: int, tau_j: float, tau: float, seed: int, schedule: Schedule) -> Dict[str, Any]:
    return {
        'level': level,
        'tau_min': tau,
        'tau_min_J': tau_j,
        'total_duration': schedule.total_duration,
        'eta': math.nan,
        'trace_dist': math.nan,
        'fidelity': math.nan,
        'log10_infidelity': math.nan,
        'seed': seed,
        'branch_error': 1,
    }


def simulate_point(level: int, tau_j: float, tau: float, seed: int, schedule: Schedule,
                   error: ErrorHamiltonian, gate: GateSpec) -> Dict[str, Any]:
    """One CSV row; branch ambiguity is flagged instead of raised."""
    row = _row(level, tau_j, tau, seed, schedule)
    try:
        result = evaluate(SimulationConfig(schedule=schedule, error=error, target=gate,
                                           level=level, tau_min=tau))
    except BranchAmbiguityError as e:
        logger.warning(f"Level {level}, tau_min*J={tau_j:.3e}, seed {seed}: {e}")
        return row
    infidelity = result.infidelity
    row.update(
        eta=result.epg_eta,
        trace_dist=result.trace_dist,
        fidelity=result.fid,
        log10_infidelity=math.log10(infidelity) if infidelity > 0 else -math.inf,
        branch_error=0,
    )
    return row


def rows_to_frame(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
    frame = frame.astype({'level': 'int64', 'seed': 'int64', 'branch_error': 'int64'})
    return frame.sort_values(['level', 'tau_min', 'seed'], kind='mergesort').reset_index(drop=True)


def write_csv(frame: pd.DataFrame, path: Union[str, Path]):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='nan', lineterminator='\n')


class SweepRunner:
    """Runs a sweep configuration end to end."""

    def __init__(self, cfg: SweepConfig, workers: Optional[int] = None, show_progress: bool = False):
        self.cfg = cfg
        self.workers = workers or cfg.workers
        self.show_progress = show_progress
        self.synthesizer = Synthesizer()
        self.errors: Dict[int, ErrorHamiltonian] = {}

    def _prepare_output(self) -> Path:
        output = Path(self.cfg.output_path)
        output.parent.mkdir(parents=True, exist_ok=True)
        # fail before simulating if the file cannot be written
        with open(output, 'a', encoding='utf-8'):
            pass
        return output

    def _points(self):
        for seed in self.cfg.seeds:
            err = assemble(replace(self.cfg.bath, seed=seed))
            logger.info(
                f"Seed {seed}: ||H_e||={err.norm_he:.6g}, ||H_SB+H_Se||={err.norm_err:.6g} "
                f"({err.spin_convention})"
            )
            self.errors[seed] = err
        for level in self.cfg.levels:
            tree = self.synthesizer.gate(self.cfg.gate, level)
            logger.info(f"Level {level}: {tree.segment_count()} segments per gate")
            for tau_j, tau in self.cfg.tau_values():
                schedule = flatten(tree, 1.0, tau)
                for seed in self.cfg.seeds:
                    yield level, tau_j, tau, seed, schedule

    def run(self) -> pd.DataFrame:
        output = self._prepare_output()
        points = list(self._points())
        logger.info(
            f"Starting sweep: {len(points)} points, levels {list(self.cfg.levels)}, "
            f"seeds {self.cfg.seeds}, {self.workers} worker(s)"
        )
        rows: List[Dict[str, Any]] = []
        progress_bar = tqdm(total=len(points), desc="Sweeping", unit="point", disable=not self.show_progress)
        executor = ThreadPoolExecutor(max_workers=self.workers)
        interrupted = False
        try:
            futures = [
                executor.submit(simulate_point, level, tau_j, tau, seed, schedule,
                                self.errors[seed], self.cfg.gate)
                for level, tau_j, tau, seed, schedule in points
            ]
            for future in as_completed(futures):
                rows.append(future.result())
                progress_bar.update(1)
        except KeyboardInterrupt:
            interrupted = True
            executor.shutdown(wait=False, cancel_futures=True)
            logger.warning(f"Interrupted; writing {len(rows)} completed rows to {output}")
            write_csv(rows_to_frame(rows), output)
            raise
        finally:
            progress_bar.close()
            if not interrupted:
                executor.shutdown(wait=True)

        frame = rows_to_frame(rows)
        write_csv(frame, output)
        flagged = int(frame['branch_error'].sum())
        logger.info(f"Wrote {len(frame)} rows to {output} ({flagged} flagged)")
        return frame


def run_sweep(cfg: SweepConfig, workers: Optional[int] = None, show_progress: bool = False) -> pd.DataFrame:
    """Simulate the sweep, write the CSV to cfg.output_path and return the dataset."""
    return SweepRunner(cfg, workers, show_progress).run()


def fully_flagged_levels(frame: pd.DataFrame) -> List[int]:
    """Levels where every point hit the logarithm branch cut."""
    grouped = frame.groupby('level')['branch_error'].min()
    return [int(level) for level, minimum in grouped.items() if minimum == 1]
