"""
Concatenated dynamically corrected gate synthesis.

A level-(l+1) gate walks an Eulerian cycle on the Cayley graph of the
decoupling group, using level-l gates for every generator, inserting the
identity half of a balance pair at the first visit of each non-identity
vertex and finishing with the target half. Trees are flattened into
rectangular-pulse schedules.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from opalg import Operator, on_system

logger = logging.getLogger(__name__)

PHASE_TOL = 1e-10
AXIS_TOL = 1e-12

_SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class DisconnectedGraphError(ValueError):
    """The generators do not generate the group."""


class MissingGateError(KeyError):
    """A gate needed by the construction has no implementation at this level."""


def same_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = PHASE_TOL) -> bool:
    """|Tr(A^dag B)| / dim == 1 within tol."""
    overlap = abs(np.trace(a.conj().T @ b)) / a.shape[0]
    return abs(1.0 - overlap) <= tol


@dataclass(frozen=True)
class GateSpec:
    """Target rotation exp(-i (angle/2) axis . sigma)."""

    axis: Tuple[float, float, float]
    angle: float

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3:
            raise ValueError(f"Rotation axis needs three components, got {len(axis)}")
        norm = math.sqrt(sum(a * a for a in axis))
        if abs(norm - 1.0) > AXIS_TOL:
            raise ValueError(f"Rotation axis must be a unit vector, |axis| = {norm!r}")
        object.__setattr__(self, 'axis', axis)
        object.__setattr__(self, 'angle', float(self.angle))

    def generator(self) -> np.ndarray:
        return sum(n * s for n, s in zip(self.axis, _SIGMA))

    def unitary(self) -> np.ndarray:
        half = self.angle / 2.0
        return math.cos(half) * np.eye(2) - 1j * math.sin(half) * self.generator()

    def hamiltonian(self, duration: float) -> np.ndarray:
        """Constant control Hamiltonian realizing the rotation over duration."""
        return (self.angle / (2.0 * duration)) * self.generator()

    def inverse(self) -> 'GateSpec':
        return GateSpec(self.axis, -self.angle)

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> 'GateSpec':
        """Rotation equal to a 2x2 unitary up to global phase."""
        u = np.asarray(u, dtype=complex)
        det = np.linalg.det(u)
        special = u / np.sqrt(det)
        cos_half = float(np.clip(np.trace(special).real / 2.0, -1.0, 1.0))
        components = [float((1j * np.trace(special @ s)).real / 2.0) for s in _SIGMA]
        sin_half = math.sqrt(sum(c * c for c in components))
        if sin_half < 1e-15:
            return cls((0.0, 0.0, 1.0), 0.0)
        axis = tuple(c / sin_half for c in components)
        return cls(axis, 2.0 * math.atan2(sin_half, cos_half))


IDENTITY = GateSpec((0.0, 0.0, 1.0), 0.0)
X_PI = GateSpec((1.0, 0.0, 0.0), math.pi)
Y_PI = GateSpec((0.0, 1.0, 0.0), math.pi)
DEFAULT_GATE = GateSpec((1.0, 0.0, 0.0), 2.0 * math.pi / 3.0)


@dataclass(frozen=True, eq=False)
class DecouplingGroup:
    """Projective unitary representation of a decoupling group and its generators."""

    elements: Tuple[np.ndarray, ...]
    labels: Tuple[str, ...]
    generators: Tuple[GateSpec, ...]
    generator_labels: Tuple[str, ...]

    @property
    def order(self) -> int:
        return len(self.elements)

    @property
    def generator_count(self) -> int:
        return len(self.generators)

    @property
    def chi(self) -> float:
        """Per-level duration growth constant d(m+3)."""
        return float(self.order * (self.generator_count + 3))

    def duration_factor(self, level: int) -> float:
        """tau_{l+1} / tau_l."""
        d, m = self.order, self.generator_count
        return d * m + (d - 1) * (1.0 + 2.0 ** (1.0 / (level + 1))) + 3.0

    def index_of(self, u: np.ndarray) -> int:
        for index, element in enumerate(self.elements):
            if same_up_to_phase(element, u):
                return index
        raise ValueError("Unitary is not an element of the group (up to phase)")

    def step(self, vertex: int, generator: int) -> int:
        """Vertex reached from `vertex` by applying a generator as the next gate."""
        return self.index_of(self.generators[generator].unitary() @ self.elements[vertex])

    def check_closure(self):
        for a in self.elements:
            for b in self.elements:
                self.index_of(a @ b)


def pauli_group() -> DecouplingGroup:
    """{I, X, Y, Z} generated by X and Y."""
    elements = (np.eye(2, dtype=complex),) + _SIGMA
    return DecouplingGroup(
        elements=elements,
        labels=('I', 'X', 'Y', 'Z'),
        generators=(X_PI, Y_PI),
        generator_labels=('X', 'Y'),
    )


def group_average(g: DecouplingGroup, e: Operator) -> Operator:
    """Pi_D[E] = (1/d) sum_i D_i^dag E D_i with D_i acting on the system factor."""
    total = np.zeros_like(e.matrix)
    for element in g.elements:
        d = on_system(element, e.dim_b).matrix
        total = total + d.conj().T @ e.matrix @ d
    return Operator(total / g.order, e.dim_s, e.dim_b)


def _check_connected(g: DecouplingGroup):
    reached = {0}
    frontier = [0]
    while frontier:
        vertex = frontier.pop()
        for generator in range(g.generator_count):
            nxt = g.step(vertex, generator)
            if nxt not in reached:
                reached.add(nxt)
                frontier.append(nxt)
    if len(reached) != g.order:
        missing = [g.labels[i] for i in range(g.order) if i not in reached]
        raise DisconnectedGraphError(
            f"Generators {list(g.generator_labels)} do not reach {missing} from the identity"
        )


def eulerian_cycle(g: DecouplingGroup) -> List[int]:
    """
    Generator indices of an Eulerian cycle on the Cayley graph, from the identity.

    Hierholzer's algorithm. At each vertex the unused generators are tried in
    declared cyclic order, starting right after the generator used to arrive.
    """
    _check_connected(g)
    m = g.generator_count
    used = set()
    # stack entries: (vertex, generator used to arrive or None)
    stack: List[Tuple[int, Optional[int]]] = [(0, None)]
    reversed_word: List[int] = []
    while stack:
        vertex, arrived_by = stack[-1]
        start = 0 if arrived_by is None else arrived_by + 1
        for offset in range(m):
            generator = (start + offset) % m
            if (vertex, generator) not in used:
                used.add((vertex, generator))
                stack.append((g.step(vertex, generator), generator))
                break
        else:
            stack.pop()
            if arrived_by is not None:
                reversed_word.append(arrived_by)
    word = reversed_word[::-1]
    logger.debug(f"Eulerian word: {''.join(g.generator_labels[i] for i in word)}")
    return word


def cayley_walk(g: DecouplingGroup, word: Sequence[int]) -> List[int]:
    """Vertices visited by a word, starting at the identity."""
    vertices = [0]
    for generator in word:
        vertices.append(g.step(vertices[-1], generator))
    return vertices


class GateKind(Enum):
    PRIMITIVE = 'primitive'
    SEQUENCE = 'sequence'
    BALANCE_IDENTITY = 'balance_identity'
    BALANCE_TARGET = 'balance_target'


@dataclass(frozen=True, eq=False)
class GateTree:
    """
    Composite gate description.

    Children are (subtree, stretch) in time order. base_duration is in units
    of the primitive duration tau0 and already includes the children's stretches.
    """

    level: int
    kind: GateKind
    target: GateSpec
    children: Tuple[Tuple['GateTree', float], ...] = ()
    base_duration: float = 1.0
    label: str = ''

    def segment_count(self) -> int:
        if self.kind is GateKind.PRIMITIVE:
            return 1
        return sum(child.segment_count() for child, _ in self.children)

    def children_product(self) -> np.ndarray:
        """Product of the children's targets, later children on the left."""
        product = np.eye(2, dtype=complex)
        for child, _ in self.children:
            product = child.target.unitary() @ product
        return product


def primitive(spec: GateSpec, label: str = '') -> GateTree:
    return GateTree(level=0, kind=GateKind.PRIMITIVE, target=spec, base_duration=1.0, label=label)


def _sequence(level: int, kind: GateKind, target: GateSpec,
              children: Sequence[Tuple[GateTree, float]], label: str) -> GateTree:
    base = math.fsum(child.base_duration * stretch for child, stretch in children)
    return GateTree(level=level, kind=kind, target=target, children=tuple(children),
                    base_duration=base, label=label)


def balance_pair(q: GateTree, q_inverse: Optional[GateTree] = None) -> Tuple[GateTree, GateTree]:
    """
    Balance pair (I_Q, Q*) built from level-l implementations of Q and Q^-1.

    In time order I_Q runs Q stretched by 2^(1/(l+1)) followed by Q^-1, and
    Q* runs Q, Q^-1, Q.
    """
    if q_inverse is None:
        q_inverse = invert(q)
    stretch = 2.0 ** (1.0 / (q.level + 1))
    name = q.label or 'Q'
    i_q = _sequence(q.level, GateKind.BALANCE_IDENTITY, IDENTITY,
                    [(q, stretch), (q_inverse, 1.0)], f'I_{name}')
    q_star = _sequence(q.level, GateKind.BALANCE_TARGET, q.target,
                       [(q, 1.0), (q_inverse, 1.0), (q, 1.0)], f'{name}*')
    return i_q, q_star


def concatenate(targets: Mapping[GateSpec, GateTree], g: DecouplingGroup, q: GateSpec,
                label: str = '') -> GateTree:
    """Level-(l+1) gate for q from the level-l gates in `targets`."""
    required = list(g.generators) + [q, q.inverse()]
    missing = [spec for spec in required if spec not in targets]
    if missing:
        raise MissingGateError(f"No level implementation for {missing}")

    q_tree = targets[q]
    level = q_tree.level
    i_q, q_star = balance_pair(q_tree, targets[q.inverse()])

    word = eulerian_cycle(g)
    vertices = cayley_walk(g, word)
    seen = {0}
    children: List[Tuple[GateTree, float]] = []
    for step, generator in enumerate(word):
        children.append((targets[g.generators[generator]], 1.0))
        vertex = vertices[step + 1]
        if vertex not in seen:
            seen.add(vertex)
            children.append((i_q, 1.0))
    children.append((q_star, 1.0))
    return _sequence(level + 1, GateKind.SEQUENCE, q, children, label)


class Synthesizer:
    """Memoized universal gate set {F, F^-1, Q, Q^-1} per concatenation level."""

    def __init__(self, group: Optional[DecouplingGroup] = None):
        self.group = group or pauli_group()
        self._cache: Dict[Tuple[GateSpec, int], GateTree] = {}
        self._labels = {spec: label for spec, label in zip(self.group.generators, self.group.generator_labels)}

    def _label(self, spec: GateSpec) -> str:
        if spec in self._labels:
            return self._labels[spec]
        if spec.inverse() in self._labels:
            return self._labels[spec.inverse()] + '^-1'
        return ''

    def gate(self, spec: GateSpec, level: int) -> GateTree:
        if level < 0:
            raise ValueError(f"Level must be non-negative, got {level}")
        key = (spec, level)
        if key in self._cache:
            return self._cache[key]
        if level == 0:
            tree = primitive(spec, self._label(spec))
        else:
            needed = list(self.group.generators) + [spec, spec.inverse()]
            targets = {s: self.gate(s, level - 1) for s in needed}
            tree = concatenate(targets, self.group, spec, self._label(spec))
            logger.debug(f"Built level-{level} gate for {spec}: {tree.segment_count()} segments")
        self._cache[key] = tree
        return tree


_DEFAULT_SYNTHESIZER = Synthesizer()


def build_gate(spec: GateSpec, level: int, synthesizer: Optional[Synthesizer] = None) -> GateTree:
    return (synthesizer or _DEFAULT_SYNTHESIZER).gate(spec, level)


def invert(q: GateTree, synthesizer: Optional[Synthesizer] = None) -> GateTree:
    """Same-level gate targeting the inverse rotation, built by the full construction."""
    return build_gate(q.target.inverse(), q.level, synthesizer)


def duration(level: int, tau0: float, g: Optional[DecouplingGroup] = None) -> float:
    """Closed-form tau_l of a level-l gate built from primitives of duration tau0."""
    if level < 0:
        raise ValueError(f"Level must be non-negative, got {level}")
    g = g or pauli_group()
    total = tau0
    for k in range(level):
        total *= g.duration_factor(k)
    return total


@dataclass(frozen=True)
class PrimitiveSegment:
    """Constant-amplitude rotation about a fixed axis."""

    axis: Tuple[float, float, float]
    angle: float
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"Segment duration must be positive, got {self.duration}")

    @property
    def amplitude(self) -> float:
        return abs(self.angle) / (2.0 * self.duration)

    def hamiltonian(self) -> np.ndarray:
        return GateSpec(self.axis, self.angle).hamiltonian(self.duration)


@dataclass(frozen=True)
class Schedule:
    segments: Tuple[PrimitiveSegment, ...] = field(default_factory=tuple)

    @property
    def total_duration(self) -> float:
        return math.fsum(segment.duration for segment in self.segments)

    @property
    def max_amplitude(self) -> float:
        return max((segment.amplitude for segment in self.segments), default=0.0)

    def __len__(self) -> int:
        return len(self.segments)

    def __add__(self, other: 'Schedule') -> 'Schedule':
        return Schedule(self.segments + other.segments)

    def control_unitary(self) -> np.ndarray:
        """Ideal system propagator with no error Hamiltonian."""
        product = np.eye(2, dtype=complex)
        for segment in self.segments:
            product = GateSpec(segment.axis, segment.angle).unitary() @ product
        return product


def _emit(tree: GateTree, stretch: float, tau0: float) -> Iterator[PrimitiveSegment]:
    if tree.kind is GateKind.PRIMITIVE:
        yield PrimitiveSegment(tree.target.axis, tree.target.angle, stretch * tree.base_duration * tau0)
        return
    for child, child_stretch in tree.children:
        yield from _emit(child, stretch * child_stretch, tau0)


def flatten(tree: GateTree, stretch: float = 1.0, tau0: float = 1.0) -> Schedule:
    """Time-ordered primitive segments; stretches multiply down the tree."""
    if stretch <= 0 or tau0 <= 0:
        raise ValueError("stretch and tau0 must be positive")
    return Schedule(tuple(_emit(tree, stretch, tau0)))


def noop_segment(duration: float) -> PrimitiveSegment:
    """Free evolution: a zero-angle segment."""
    return PrimitiveSegment((0.0, 0.0, 1.0), 0.0, duration)


def edd_schedule(g: Optional[DecouplingGroup] = None, tau0: float = 1.0,
                 free_time: float = 0.0) -> Schedule:
    """Eulerian decoupling NOOP: generator pulses along the Eulerian cycle."""
    g = g or pauli_group()
    segments: List[PrimitiveSegment] = []
    for generator in eulerian_cycle(g):
        if free_time > 0:
            segments.append(noop_segment(free_time))
        spec = g.generators[generator]
        segments.append(PrimitiveSegment(spec.axis, spec.angle, tau0))
    return Schedule(tuple(segments))


SCHEDULE_COLUMNS = ['index', 'axis_x', 'axis_y', 'axis_z', 'angle_rad', 'duration']


def schedule_frame(schedule: Schedule) -> pd.DataFrame:
    rows = [
        (index, *segment.axis, segment.angle, segment.duration)
        for index, segment in enumerate(schedule.segments)
    ]
    return pd.DataFrame(rows, columns=SCHEDULE_COLUMNS)


def write_schedule(schedule: Schedule, destination: Union[str, Path, None] = None) -> Optional[str]:
    """Write the segment table; returns the text when no destination is given."""
    frame = schedule_frame(schedule)
    return frame.to_csv(destination, index=False, float_format='%.16e', lineterminator='\n')
