"""Verification queries over input boxes, refinement checks and constraint frames."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Network

log = logging.getLogger(__name__)

BOX_TOL = 1e-9
COEFF_TOL = 1e-12


class QueryError(ValueError):
    pass


class Relation(str, enum.Enum):
    LE = "<="
    GE = ">="


class Refinement(enum.Enum):
    REFINES = "refines"
    NOT_REFINES = "not_refines"
    UNKNOWN = "unknown"


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


class Box:
    """Axis-aligned box ``lower <= x <= upper``."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower, upper):
        lower, upper = _frozen(lower), _frozen(upper)
        if lower.shape != upper.shape:
            raise QueryError("box bounds differ in length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise QueryError("box bounds must be finite")
        if np.any(lower > upper):
            raise QueryError(f"empty box: lower {lower} exceeds upper {upper}")
        self.lower = lower
        self.upper = upper

    @classmethod
    def around(cls, center, radius) -> Box:
        center = np.asarray(center, dtype=np.float64)
        return cls(center - radius, center + radius)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return (self.lower + self.upper) / 2.0

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains_point(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def contains_box(self, other: Box, tol=BOX_TOL) -> bool:
        return bool(np.all(other.lower >= self.lower - tol) and np.all(other.upper <= self.upper + tol))

    def with_bounds(self, dim: int, lower: float, upper: float) -> Box:
        lo, hi = self.lower.copy(), self.upper.copy()
        lo[dim], hi[dim] = lower, upper
        return Box(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """``coeffs . y  (<= | >=)  rhs``."""

    coeffs: np.ndarray
    relation: Relation
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        object.__setattr__(self, "relation", Relation(self.relation))
        object.__setattr__(self, "rhs", float(self.rhs))
        if not (np.all(np.isfinite(self.coeffs)) and np.isfinite(self.rhs)):
            raise QueryError("constraint entries must be finite")

    def slack(self, y) -> float:
        """Nonnegative iff the constraint holds at ``y``."""
        v = float(self.coeffs @ np.asarray(y, dtype=np.float64))
        return self.rhs - v if self.relation is Relation.LE else v - self.rhs

    def holds(self, y, tol=1e-7) -> bool:
        return self.slack(y) >= -tol

    def as_le(self) -> tuple[np.ndarray, float]:
        if self.relation is Relation.LE:
            return np.array(self.coeffs), self.rhs
        return -np.array(self.coeffs), -self.rhs

    def same_as(self, other: LinearConstraint, tol=COEFF_TOL) -> bool:
        """Same halfspace once both are written as ``a @ y <= b``."""
        (a1, b1), (a2, b2) = self.as_le(), other.as_le()
        return (
            a1.shape == a2.shape
            and bool(np.all(np.abs(a1 - a2) <= tol))
            and abs(b1 - b2) <= tol
        )

    def __eq__(self, other):
        if not isinstance(other, LinearConstraint):
            return NotImplemented
        return (
            self.relation is other.relation
            and np.array_equal(self.coeffs, other.coeffs)
            and self.rhs == other.rhs
        )

    def __hash__(self):
        return hash((self.coeffs.tobytes(), self.relation, self.rhs))

    def to_dict(self) -> dict:
        return {"coeffs": self.coeffs.tolist(), "relation": self.relation.value, "rhs": self.rhs}


@dataclass(frozen=True, eq=False)
class VerificationQuery:
    """Is there an input in ``input`` whose output satisfies every constraint?

    SAT means such a violation witness exists.
    """

    network: Network
    input: Box
    output: tuple[LinearConstraint, ...] = ()
    id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "output", tuple(self.output))
        if self.input.dim != self.network.input_dim:
            raise QueryError(
                f"input box has {self.input.dim} dims, network expects {self.network.input_dim}"
            )
        for c in self.output:
            if c.coeffs.shape[0] != self.network.output_dim:
                raise QueryError("output constraint length differs from network output dimension")
        if self.id < 0:
            raise QueryError("query id must be nonnegative")

    def with_input(self, box: Box, id=None) -> VerificationQuery:
        return replace(self, input=box, id=self.id if id is None else id)

    def is_witness(self, x, tol=1e-7) -> bool:
        if not self.input.contains_point(x, tol=tol):
            return False
        y = self.network.evaluate(x)
        return all(c.holds(y, tol) for c in self.output)

    def __eq__(self, other):
        if not isinstance(other, VerificationQuery):
            return NotImplemented
        return (
            self.network is other.network
            and self.input == other.input
            and self.output == other.output
            and self.id == other.id
        )

    __hash__ = object.__hash__

    def to_dict(self) -> dict:
        return {
            "input_lower": self.input.lower.tolist(),
            "input_upper": self.input.upper.tolist(),
            "output_constraints": [c.to_dict() for c in self.output],
        }


def same_network(a: Network, b: Network) -> bool:
    if a is b:
        return True
    if len(a.layers) != len(b.layers):
        return False
    return all(
        la.activation == lb.activation
        and np.array_equal(la.weights, lb.weights)
        and np.array_equal(la.bias, lb.bias)
        for la, lb in zip(a.layers, b.layers)
    )


def check_refinement(q2: VerificationQuery, q1: VerificationQuery) -> Refinement:
    """Decide whether ``q2`` is a refinement of ``q1`` (smaller box, more constraints).

    Output containment is decided syntactically only: every constraint of
    ``q1`` must reappear in ``q2``. Anything else yields ``UNKNOWN``.
    """
    if not same_network(q2.network, q1.network):
        raise QueryError("refinement is only defined between queries on the same network")
    if not q1.input.contains_box(q2.input, tol=BOX_TOL):
        return Refinement.NOT_REFINES
    for c1 in q1.output:
        if not any(c1.same_as(c2) for c2 in q2.output):
            return Refinement.UNKNOWN
    return Refinement.REFINES


def query_from_dict(doc, network: Network, id: int = 0) -> VerificationQuery:
    try:
        box = Box(doc["input_lower"], doc["input_upper"])
        cons = [
            LinearConstraint(c["coeffs"], Relation(c["relation"]), c["rhs"])
            for c in doc.get("output_constraints", [])
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise QueryError(f"malformed query document: {e}") from e
    return VerificationQuery(network, box, tuple(cons), id)


def load_query(text: str, network: Network, id: int = 0) -> VerificationQuery:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise QueryError(f"malformed query document: {e}") from e
    return query_from_dict(doc, network, id)


@dataclass
class Frame:
    tightenings: list  # (dim, lower, upper)
    constraints: list
    previous: VerificationQuery


@dataclass
class ConstraintStack:
    """Push/pop frames of input tightenings and extra output constraints.

    The network is shared by every view; only the box and the constraint
    list change between frames.
    """

    base: VerificationQuery
    frames: list = field(default_factory=list)
    active: VerificationQuery = None

    def __post_init__(self):
        if self.active is None:
            self.active = self.base

    def push(self, tightenings=(), constraints=()) -> VerificationQuery:
        cur = self.active
        lo, hi = cur.input.lower.copy(), cur.input.upper.copy()
        tightenings = [(int(d), float(l), float(u)) for d, l, u in tightenings]
        for d, l, u in tightenings:
            if not 0 <= d < cur.input.dim:
                raise QueryError(f"tightening on unknown input dimension {d}")
            if l < lo[d] or u > hi[d]:
                raise QueryError(f"tightening [{l}, {u}] widens dimension {d} (currently [{lo[d]}, {hi[d]}])")
            if l > u:
                raise QueryError(f"tightening [{l}, {u}] empties dimension {d}")
            lo[d], hi[d] = l, u
        box = Box(lo, hi) if tightenings else cur.input
        new = replace(cur, input=box, output=cur.output + tuple(constraints))
        self.frames.append(Frame(tightenings, list(constraints), cur))
        self.active = new
        return new

    def pop(self) -> VerificationQuery:
        if not self.frames:
            raise QueryError("pop on an empty constraint stack")
        self.active = self.frames.pop().previous
        return self.active

    def __len__(self):
        return len(self.frames)


def push_frame(stack: ConstraintStack, tightenings=(), constraints=()) -> VerificationQuery:
    return stack.push(tightenings, constraints)


def pop_frame(stack: ConstraintStack) -> VerificationQuery:
    return stack.pop()


def beats_constraint(out_dim: int, target: int, rival: int) -> LinearConstraint:
    """``y[rival] - y[target] >= 0``: the rival class ties or beats the target."""
    coeffs = np.zeros(out_dim)
    coeffs[rival] = 1.0
    coeffs[target] = -1.0
    return LinearConstraint(coeffs, Relation.GE, 0.0)


def freed_box(x0, domain: Box, freed) -> Box:
    """Box with ``freed`` features over the domain and every other feature at x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    lo, hi = x0.copy(), x0.copy()
    idx = list(freed)
    lo[idx], hi[idx] = domain.lower[idx], domain.upper[idx]
    return Box(lo, hi)
