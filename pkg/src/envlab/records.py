"""Boolean algebra of measurement records.

A record event is a subset of the pointer-basis outcome indices, or
equivalently the projector onto the subspace those records span.  Because
all events share one orthonormal record basis, their projectors commute and
the lattice they generate is Boolean; the axiom checker verifies this both
in exact set arithmetic and in matrix arithmetic.  Probabilities of coarse
events are exact rationals: the sum of the member fine-grained weights over
the total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .born import BornResult, WeightVector
from .hilbert import StateVector

PROJECTOR_TOL = 1e-12

AXIOM_NAMES = (
    "commutativity",
    "associativity",
    "absorptivity",
    "distributivity",
    "orthocompleteness",
)


@dataclass(frozen=True)
class RecordEvent:
    """Coarse-grained event: a set of record indices inside a fixed universe."""

    universe: frozenset
    members: frozenset

    def __post_init__(self):
        universe = frozenset(int(k) for k in self.universe)
        members = frozenset(int(k) for k in self.members)
        if not universe:
            raise ValueError("universe cannot be empty")
        if any(k < 0 for k in universe):
            raise ValueError("record indices must be nonnegative")
        if not members <= universe:
            raise ValueError(f"members {sorted(members - universe)} outside the universe")
        object.__setattr__(self, "universe", universe)
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    def projector(self) -> np.ndarray:
        """0/1 diagonal matrix over the sorted universe (record basis order)."""
        order = sorted(self.universe)
        return np.diag([1.0 if k in self.members else 0.0 for k in order])

    @classmethod
    def from_projector(cls, universe, matrix) -> "RecordEvent":
        """Recover an event from a projector expressed in the record basis.

        Anything that is not a diagonal 0/1 matrix in that basis is rejected:
        a non-diagonal projector does not commute with the rest of the
        algebra, and a memory cell cannot be consulted in any other basis.
        """
        order = sorted(int(k) for k in universe)
        mat = np.asarray(matrix, dtype=complex)
        if mat.shape != (len(order), len(order)):
            raise ValueError(f"projector must be {len(order)} x {len(order)}")
        diag = np.diag(mat)
        if np.max(np.abs(mat - np.diag(diag))) > PROJECTOR_TOL:
            raise ValueError("projector is not diagonal in the record basis")
        rounded = np.round(diag.real)
        if np.max(np.abs(diag - rounded)) > PROJECTOR_TOL or \
                not set(np.unique(rounded)) <= {0.0, 1.0}:
            raise ValueError("matrix is not an idempotent 0/1 projector")
        members = frozenset(order[i] for i in range(len(order)) if rounded[i] == 1.0)
        return cls(frozenset(order), members)


def _require_shared_universe(a: RecordEvent, b: RecordEvent):
    if a.universe != b.universe:
        raise ValueError("events live in different universes")


def meet(a: RecordEvent, b: RecordEvent) -> RecordEvent:
    """Logical product: intersection of members, P_a P_b on the matrix side."""
    _require_shared_universe(a, b)
    return RecordEvent(a.universe, a.members & b.members)


def join(a: RecordEvent, b: RecordEvent) -> RecordEvent:
    """Logical sum: union of members, P_a + P_b - P_a P_b on the matrix side."""
    _require_shared_universe(a, b)
    return RecordEvent(a.universe, a.members | b.members)


def complement(a: RecordEvent) -> RecordEvent:
    """Negation: universe minus members, P_U - P_a on the matrix side."""
    return RecordEvent(a.universe, a.universe - a.members)


# matrix mirrors of the lattice operations; verify_axioms evaluates every
# identity once on events and once on raw projectors through these
def _m(a, b):
    return a @ b if isinstance(a, np.ndarray) else meet(a, b)


def _j(a, b):
    return a + b - a @ b if isinstance(a, np.ndarray) else join(a, b)


def _c(a):
    return np.eye(a.shape[0]) - a if isinstance(a, np.ndarray) else complement(a)


_IDENTITIES = (
    ("commutativity", lambda k, l, m, top: (_m(k, l), _m(l, k))),
    ("commutativity", lambda k, l, m, top: (_j(k, l), _j(l, k))),
    ("associativity", lambda k, l, m, top: (_m(_m(k, l), m), _m(k, _m(l, m)))),
    ("associativity", lambda k, l, m, top: (_j(_j(k, l), m), _j(k, _j(l, m)))),
    ("absorptivity", lambda k, l, m, top: (_j(k, _m(k, l)), k)),
    ("absorptivity", lambda k, l, m, top: (_m(k, _j(k, l)), k)),
    ("distributivity", lambda k, l, m, top: (_m(k, _j(l, m)), _j(_m(k, l), _m(k, m)))),
    ("distributivity", lambda k, l, m, top: (_j(k, _m(l, m)), _m(_j(k, l), _j(k, m)))),
    ("orthocompleteness", lambda k, l, m, top: (_j(k, _c(k)), top)),
    ("orthocompleteness", lambda k, l, m, top: (_m(k, _c(k)), _c(top))),
    ("orthocompleteness", lambda k, l, m, top: (_c(_c(k)), k)),
    ("orthocompleteness", lambda k, l, m, top: (_j(k, _m(l, _c(l))), k)),
    ("orthocompleteness", lambda k, l, m, top: (_m(k, _j(l, _c(l))), k)),
)


@dataclass(frozen=True)
class AxiomReport:
    """Per-axiom pass counts over random event triples."""

    universe_size: int
    trials: int
    passes: tuple       # (axiom name, trials passed) in AXIOM_NAMES order
    violations: tuple   # (axiom name, trial index, detail)

    @property
    def clean(self) -> bool:
        return not self.violations


def _random_event(rng, universe: frozenset) -> RecordEvent:
    density = rng.random()
    members = frozenset(k for k in universe if rng.random() < density)
    return RecordEvent(universe, members)


def verify_axioms(universe_size: int, trials: int = 500, seed: int = 0) -> AxiomReport:
    """Check the five lattice axiom families on random event triples.

    Every identity is evaluated three ways per trial: exact set arithmetic,
    raw projector arithmetic (to 1e-12), and the cross-check that the
    set-side result materializes to the same projector.  A trial passes an
    axiom family only when all its identities pass all three.
    """
    n = int(universe_size)
    if n < 1:
        raise ValueError("universe_size must be >= 1")
    universe = frozenset(range(n))
    top_event = RecordEvent(universe, universe)
    top_matrix = np.eye(n)
    rng = np.random.default_rng(seed)
    counts = dict.fromkeys(AXIOM_NAMES, 0)
    violations = []
    for trial in range(int(trials)):
        events = tuple(_random_event(rng, universe) for _ in range(3))
        projs = tuple(e.projector() for e in events)
        failed = set()
        for name, identity in _IDENTITIES:
            ev_l, ev_r = identity(*events, top_event)
            mat_l, mat_r = identity(*projs, top_matrix)
            if ev_l.members != ev_r.members:
                failed.add(name)
                violations.append((name, trial, "set sides differ"))
            if float(np.max(np.abs(mat_l - mat_r))) > PROJECTOR_TOL:
                failed.add(name)
                violations.append((name, trial, "projector sides differ"))
            if float(np.max(np.abs(ev_l.projector() - mat_l))) > PROJECTOR_TOL:
                failed.add(name)
                violations.append((name, trial, "set and projector semantics split"))
        for name in AXIOM_NAMES:
            if name not in failed:
                counts[name] += 1
    return AxiomReport(
        universe_size=n,
        trials=int(trials),
        passes=tuple((name, counts[name]) for name in AXIOM_NAMES),
        violations=tuple(violations),
    )


def _weights_of(result) -> tuple:
    """Fine-grained weights from a BornResult, WeightVector, or plain tally."""
    if isinstance(result, BornResult):
        return result.weights.m
    if isinstance(result, WeightVector):
        return result.m
    tally = tuple(int(x) for x in result)
    if not tally or any(x < 0 for x in tally):
        raise ValueError("tally must be nonnegative integers")
    if sum(tally) == 0:
        raise ValueError("tally has no support")
    return tally


def event_probability(result, event: RecordEvent) -> Fraction:
    """Exact probability of a coarse event: member weights over the total."""
    weights = _weights_of(result)
    if event.universe != frozenset(range(len(weights))):
        raise ValueError(
            f"event universe does not match the {len(weights)} outcome indices"
        )
    return Fraction(sum(weights[k] for k in event.members), sum(weights))


def conditional_probability(event: RecordEvent, outcome: int) -> Fraction:
    """p(event | fine outcome): 1 when the outcome is a member, else 0."""
    if int(outcome) not in event.universe:
        raise ValueError(f"outcome {outcome} outside the universe")
    return Fraction(1 if int(outcome) in event.members else 0)


def build_upsilon(result, partition) -> StateVector:
    """Two-register state correlating coarse cells with fine outcomes.

    Cell c of the partition contributes sqrt(m_k / M) on |c>|k> for each of
    its outcomes k; an outcome with weight zero contributes no term, since
    there is no record of something that never happened.  Layout: (coarse,
    fine), coarse register first, cells in the order given.
    """
    weights = _weights_of(result)
    n = len(weights)
    cells = list(partition)
    if not cells:
        raise ValueError("partition needs at least one cell")
    universe = frozenset(range(n))
    for cell in cells:
        if cell.universe != universe:
            raise ValueError("partition cell universe does not match the outcomes")
    covered = set()
    for cell in cells:
        if covered & cell.members:
            raise ValueError("partition cells overlap")
        covered |= cell.members
    support = {k for k in range(n) if weights[k] > 0}
    if not support <= covered:
        raise ValueError(f"partition misses outcomes {sorted(support - covered)}")
    total = sum(weights)
    amp = np.zeros((len(cells), n), dtype=complex)
    for c, cell in enumerate(cells):
        for k in cell.members:
            if weights[k] > 0:
                amp[c, k] = np.sqrt(weights[k] / total)
    return StateVector((len(cells), n), amp.reshape(-1))


def lemma5_recursion(universe_size: int, members) -> Fraction:
    """Peel-one-off product for the probability of an even coarse event.

    Removing one non-member outcome at a time from an even universe of size
    N multiplies the probability by (1 - 1/N); the product telescopes to
    n_members / N and is computed here in exact rationals.
    """
    n = int(universe_size)
    if n < 1:
        raise ValueError("universe_size must be >= 1")
    mem = frozenset(int(k) for k in members)
    if not mem <= frozenset(range(n)):
        raise ValueError("members outside the universe")
    p = Fraction(1)
    for j in range(n - len(mem)):
        p *= 1 - Fraction(1, n - j)
    return p


def parse_event(text: str, universe_size: int) -> RecordEvent:
    """Parse comma-separated record indices ("1,2,5"; "" is the empty event)."""
    body = text.strip()
    if body:
        members = frozenset(int(tok) for tok in body.split(",") if tok.strip())
    else:
        members = frozenset()
    return RecordEvent(frozenset(range(int(universe_size))), members)
