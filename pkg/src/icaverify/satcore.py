"""A small clause database over ReLU phase variables.

Supports solving under assumptions (complete DPLL search) and reporting the
literals that unit propagation forces at the assumption level.

Literals are stored DIMACS style: variable ``i`` (0-based) is ``i + 1`` when
the neuron is active and ``-(i + 1)`` when it is inactive.
"""

from __future__ import annotations

import enum
import logging
from typing import NamedTuple

from .model import NeuronId

log = logging.getLogger(__name__)


class ClauseError(ValueError):
    pass


class SatStatus(enum.Enum):
    UNSAT = "unsat"
    CONSISTENT = "consistent"


class PhaseLiteral(NamedTuple):
    """``neuron`` is active when ``active`` is True, inactive otherwise."""

    neuron: NeuronId
    active: bool

    def negate(self) -> PhaseLiteral:
        return PhaseLiteral(self.neuron, not self.active)

    def __str__(self):
        return f"{self.neuron}={'A' if self.active else 'I'}"

    def to_dict(self) -> dict:
        return {
            "layer": self.neuron.layer,
            "neuron": self.neuron.neuron,
            "phase": "active" if self.active else "inactive",
        }

    @classmethod
    def from_dict(cls, d) -> PhaseLiteral:
        if d["phase"] not in ("active", "inactive"):
            raise ClauseError(f"unknown phase {d['phase']!r}")
        return cls(NeuronId(int(d["layer"]), int(d["neuron"])), d["phase"] == "active")


def check_literals(literals) -> frozenset:
    """Validate a literal set: no variable may occur twice."""
    lits = frozenset(literals)
    neurons = [lit.neuron for lit in lits]
    if len(set(neurons)) != len(neurons):
        raise ClauseError(f"clause mentions a variable twice: {sorted(map(str, lits))}")
    return lits


class SatState:
    """Clause database plus the result of the last assumption solve.

    Propagation uses two watched literals per clause; the search is plain
    DPLL with chronological backtracking, branching on the lowest unassigned
    variable and trying the inactive phase first.
    """

    def __init__(self):
        self.reset()

    def reset(self):
        self.clauses: list[list[int]] = []
        self.units: list[int] = []
        self.inconsistent = False  # holds the empty clause
        self._var: dict[NeuronId, int] = {}
        self._neuron: list[NeuronId] = []
        self._watches: dict[int, list[int]] = {}
        self._value: list[int] = []  # per variable: 1 true, -1 false, 0 free
        self._trail: list[int] = []
        self._implied: list[int] | None = None
        self._last: SatStatus | None = None

    # -- encoding -------------------------------------------------------
    def _encode(self, lit: PhaseLiteral) -> int:
        v = self._var.get(lit.neuron)
        if v is None:
            v = len(self._neuron)
            self._var[lit.neuron] = v
            self._neuron.append(lit.neuron)
            self._value.append(0)
        return v + 1 if lit.active else -(v + 1)

    def _decode(self, code: int) -> PhaseLiteral:
        return PhaseLiteral(self._neuron[abs(code) - 1], code > 0)

    @property
    def num_vars(self) -> int:
        return len(self._neuron)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses) + len(self.units) + int(self.inconsistent)

    def add_clause(self, literals):
        """Add the disjunction of ``literals``; persists until :meth:`reset`."""
        lits = check_literals(literals)
        if not lits:
            raise ClauseError("empty clause; use mark_inconsistent()")
        codes = sorted((self._encode(lit) for lit in lits), key=lambda c: (abs(c), c))
        if len(codes) == 1:
            self.units.append(codes[0])
            return
        idx = len(self.clauses)
        self.clauses.append(codes)
        self._watches.setdefault(codes[0], []).append(idx)
        self._watches.setdefault(codes[1], []).append(idx)

    def mark_inconsistent(self):
        self.inconsistent = True

    # -- solving --------------------------------------------------------
    def _lit_value(self, code: int) -> int:
        val = self._value[abs(code) - 1]
        return val if code > 0 else -val

    def _assign(self, code: int) -> bool:
        """Make ``code`` true; False if it is already false."""
        cur = self._lit_value(code)
        if cur:
            return cur > 0
        self._value[abs(code) - 1] = 1 if code > 0 else -1
        self._trail.append(code)
        return True

    def _propagate(self, head: int) -> int:
        """Unit propagation from trail position ``head``; -1 on conflict, else new head."""
        trail, clauses, watches, value = self._trail, self.clauses, self._watches, self._value
        while head < len(trail):
            false_lit = -trail[head]
            head += 1
            watching = watches.get(false_lit)
            if not watching:
                continue
            keep = []
            i = 0
            n = len(watching)
            while i < n:
                ci = watching[i]
                i += 1
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                v0 = value[abs(first) - 1]
                if (v0 if first > 0 else -v0) > 0:
                    keep.append(ci)
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    vk = value[abs(lk) - 1]
                    if (vk if lk > 0 else -vk) >= 0:
                        c[1], c[k] = lk, false_lit
                        watches.setdefault(lk, []).append(ci)
                        break
                else:
                    keep.append(ci)
                    if (v0 if first > 0 else -v0) < 0:
                        keep.extend(watching[i:])
                        watches[false_lit] = keep
                        return -1
                    value[abs(first) - 1] = 1 if first > 0 else -1
                    trail.append(first)
            watches[false_lit] = keep
        return head

    def _undo(self, mark: int):
        for code in self._trail[mark:]:
            self._value[abs(code) - 1] = 0
        del self._trail[mark:]

    def solve(self, assumptions, full_search=True) -> SatStatus:
        """Check the database together with the unit assumptions.

        With ``full_search`` the answer is exact; otherwise only unit
        propagation is used and UNSAT is reported only when it derives a
        conflict.
        """
        self._implied = None
        self._last = SatStatus.UNSAT
        self._undo(0)
        if self.inconsistent:
            return SatStatus.UNSAT
        assumptions = list(assumptions)
        phases = {}
        for lit in assumptions:
            if phases.setdefault(lit.neuron, lit.active) != lit.active:
                log.debug("complementary assumptions on %s", lit.neuron)
                return SatStatus.UNSAT
        try:
            fixed = set()
            for lit in assumptions:
                v = self._var.get(lit.neuron)
                if v is None:
                    continue  # variable absent from every clause
                code = v + 1 if lit.active else -(v + 1)
                if not self._assign(code):
                    log.debug("complementary assumptions on %s", lit.neuron)
                    return SatStatus.UNSAT
                fixed.add(code)
            for code in self.units:
                if not self._assign(code):
                    return SatStatus.UNSAT
            if self._propagate(0) < 0:
                return SatStatus.UNSAT
            implied = [c for c in self._trail if c not in fixed]
            if full_search and not self._search():
                return SatStatus.UNSAT
            self._implied = implied
            self._last = SatStatus.CONSISTENT
            return SatStatus.CONSISTENT
        finally:
            self._undo(0)

    def _search(self) -> bool:
        value = self._value
        stack = []  # (trail mark, variable, second branch pending)
        v = 0
        head = len(self._trail)
        while True:
            while v < len(value) and value[v]:
                v += 1
            if v == len(value):
                return True
            mark = len(self._trail)
            stack.append((mark, v, True))
            self._assign(-(v + 1))
            head = self._propagate(mark)
            while head < 0:
                # backtrack to the latest branch with an untried value
                while stack and not stack[-1][2]:
                    stack.pop()
                if not stack:
                    return False
                mark, bv, _ = stack.pop()
                self._undo(mark)
                stack.append((mark, bv, False))
                self._assign(bv + 1)
                head = self._propagate(mark)
                v = 0
            v = 0

    def implied_literals(self) -> list[PhaseLiteral]:
        if self._last is not SatStatus.CONSISTENT:
            raise ClauseError("implied literals are only available after a consistent solve")
        return [self._decode(c) for c in self._implied]

    def dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {self.num_clauses}"]
        for i, n in enumerate(self._neuron):
            lines.append(f"c {i + 1} {n.layer} {n.neuron}")
        if self.inconsistent:
            lines.append("0")
        lines.extend(f"{u} 0" for u in self.units)
        lines.extend(" ".join(map(str, sorted(c, key=lambda x: (abs(x), x)))) + " 0" for c in self.clauses)
        return "\n".join(lines) + "\n"


def reset(state: SatState):
    state.reset()


def add_clause(state: SatState, literals):
    state.add_clause(literals)


def solve_under_assumptions(state: SatState, assumptions, full_search=True) -> SatStatus:
    return state.solve(assumptions, full_search)


def implied_literals(state: SatState) -> list[PhaseLiteral]:
    return state.implied_literals()
