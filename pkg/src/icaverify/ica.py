"""Incremental conflict analyser: a per-query conflict pool plus a SAT instance.

A conflict is a set of phase literals whose conjunction is infeasible for the
query that produced it. It enters the SAT database as the clause of the
negated literals. Conflicts recorded for a query stay valid for every
refinement of that query, so later queries may load them through their
inheritance set.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field

from .propagation import BoundsState, PhaseAssignment, PhaseContradiction, apply_implied_literals
from .satcore import ClauseError, PhaseLiteral, SatState, SatStatus, check_literals

log = logging.getLogger(__name__)


class PoolError(ValueError):
    pass


class IcaStatus(enum.Enum):
    UNSAT = "unsat"
    CONSISTENT = "consistent"


class ConflictPool:
    """query id -> ordered list of conflicts (frozensets of PhaseLiteral)."""

    def __init__(self, pool=None):
        self.pool: dict[int, list[frozenset]] = {}
        self._index: dict[int, dict] = {}  # qid -> literal -> positions in pool[qid]
        for qid, conflicts in (pool or {}).items():
            self.touch(int(qid))
            for c in conflicts:
                self._insert(int(qid), frozenset(c))

    def __contains__(self, qid):
        return qid in self.pool

    def __getitem__(self, qid) -> list[frozenset]:
        return self.pool.get(qid, [])

    def __eq__(self, other):
        if not isinstance(other, ConflictPool):
            return NotImplemented
        return {k: set(v) for k, v in self.pool.items()} == {k: set(v) for k, v in other.pool.items()}

    def ids(self):
        return sorted(self.pool)

    def touch(self, qid: int):
        self.pool.setdefault(qid, [])
        self._index.setdefault(qid, {})

    def add(self, qid: int, conflict: frozenset) -> bool:
        """Insert unless an existing conflict of ``qid`` is a subset of it."""
        self.touch(qid)
        if self._subsumed(self.pool[qid], self._index[qid], conflict):
            return False
        self._insert(qid, conflict)
        return True

    def _insert(self, qid: int, conflict: frozenset):
        existing, index = self.pool[qid], self._index[qid]
        pos = len(existing)
        existing.append(conflict)
        for lit in conflict or (None,):
            index.setdefault(lit, []).append(pos)

    @staticmethod
    def _subsumed(existing, index, conflict) -> bool:
        if index.get(None):
            return True  # the empty conflict is a subset of everything
        hits: dict[int, int] = {}
        for lit in conflict:
            for pos in index.get(lit, ()):
                hits[pos] = hits.get(pos, 0) + 1
        return any(n == len(existing[pos]) for pos, n in hits.items())

    def num_clauses(self) -> int:
        return sum(len(v) for v in self.pool.values())

    def copy(self) -> ConflictPool:
        return ConflictPool(self.pool)

    def to_dict(self) -> dict:
        return {
            "queries": {
                str(qid): [
                    [lit.to_dict() for lit in sorted(c)]
                    for c in conflicts
                ]
                for qid, conflicts in sorted(self.pool.items())
            }
        }

    @classmethod
    def from_dict(cls, doc) -> ConflictPool:
        if not doc:
            return cls()
        if not isinstance(doc, dict) or not isinstance(doc.get("queries", {}), dict):
            raise PoolError("pool document must be an object with a 'queries' map")
        pool = cls()
        try:
            for qid, conflicts in doc.get("queries", {}).items():
                pool.touch(int(qid))
                for c in conflicts:
                    pool._insert(int(qid), check_literals(PhaseLiteral.from_dict(d) for d in c))
        except (KeyError, TypeError, ValueError, ClauseError) as e:
            raise PoolError(f"malformed pool document: {e}") from e
        return pool


@dataclass
class IcaCounters:
    prunes: int = 0
    propagations: int = 0


@dataclass
class ICAState:
    """Shared by every query of a task run; owns one SAT instance at a time."""

    pool: ConflictPool = field(default_factory=ConflictPool)
    sat: SatState = field(default_factory=SatState)
    inherit: frozenset = frozenset()
    counters: IcaCounters = field(default_factory=IcaCounters)
    full_search: bool = True
    inherited_clauses: int = 0
    # optional hook(alpha, status, implied) used by tests to audit every call
    observer: object = None

    def begin_query(self, inherit=()):
        """Reset the SAT instance and load all conflicts of the inherited ids."""
        self.sat.reset()
        self.inherit = frozenset(inherit)
        self.counters = IcaCounters()
        self.inherited_clauses = 0
        for qid in sorted(self.inherit):
            if qid not in self.pool:
                log.warning("inherited query id %s has no conflict set; treating as empty", qid)
                continue
            for conflict in self.pool[qid]:
                self._load(conflict)
                self.inherited_clauses += 1

    def _load(self, conflict: frozenset):
        if conflict:
            self.sat.add_clause(lit.negate() for lit in conflict)
        else:
            self.sat.mark_inconsistent()

    def propagate(self, b: BoundsState, pi: PhaseAssignment):
        """Check the node's fixed phases against the loaded conflicts.

        Returns ``(status, bounds, assignment, n_implied)``. On CONSISTENT the
        unit-implied literals have been applied to the bounds and assignment.
        """
        alpha = b.fixed_literals()
        if self.sat.solve(alpha, self.full_search) is SatStatus.UNSAT:
            self.counters.prunes += 1
            self._notify(alpha, IcaStatus.UNSAT, [])
            return IcaStatus.UNSAT, b, pi, 0
        implied = self.sat.implied_literals()
        if not implied:
            self._notify(alpha, IcaStatus.CONSISTENT, [])
            return IcaStatus.CONSISTENT, b, pi, 0
        try:
            b, pi = apply_implied_literals(b, pi, implied)
        except PhaseContradiction:
            self.counters.prunes += 1
            self._notify(alpha, IcaStatus.UNSAT, [])
            return IcaStatus.UNSAT, b, pi, 0
        self.counters.propagations += len(implied)
        self._notify(alpha, IcaStatus.CONSISTENT, implied)
        return IcaStatus.CONSISTENT, b, pi, len(implied)

    def _notify(self, alpha, status, implied):
        if self.observer is not None:
            self.observer(alpha, status, implied)

    def record_conflict(self, qid: int, conflict) -> bool:
        """Store ``conflict`` for ``qid`` and add it to the live SAT instance.

        Skipped when an existing conflict of ``qid`` is a subset of it.
        Returns True if the conflict was stored.
        """
        conflict = check_literals(conflict)
        if not self.pool.add(qid, conflict):
            return False
        if not conflict:
            log.info("query %s: empty conflict, query is infeasible", qid)
        self._load(conflict)
        return True

    def save_pool(self, sink):
        json.dump(self.pool.to_dict(), sink, indent=1)


def save_pool(state: ICAState, sink):
    state.save_pool(sink)


def load_pool(source) -> ConflictPool:
    text = source.read() if hasattr(source, "read") else str(source)
    if not text.strip():
        return ConflictPool()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise PoolError(f"malformed pool document: {e}") from e
    return ConflictPool.from_dict(doc)


def begin_query(state: ICAState, inherit=()):
    state.begin_query(inherit)


def ica_propagate(state: ICAState, b: BoundsState, pi: PhaseAssignment):
    return state.propagate(b, pi)


def record_conflict(state: ICAState, qid: int, conflict) -> bool:
    return state.record_conflict(qid, conflict)
