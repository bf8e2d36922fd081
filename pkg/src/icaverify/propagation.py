"""Interval bound propagation under a partial ReLU phase assignment.

``propagate`` is the numeric half of every search node: it tightens neuron
intervals, detects infeasibility, records phases implied by the bounds, looks
for a concrete counterexample and, once every ReLU phase is fixed, settles
the node exactly with an LP over the input box.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .model import RELU, Network, NeuronId
from .query import VerificationQuery
from .satcore import PhaseLiteral

EMPTY_TOL = 1e-9
SAT_TOL = 1e-7

ACTIVE, INACTIVE, UNDECIDED = 1, -1, 0


class NodeStatus(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


class PhaseContradiction(Exception):
    """A literal contradicts a phase that is already fixed or an empty interval."""


class WitnessError(RuntimeError):
    """The leaf LP produced a point that fails re-evaluation through the network."""


@dataclass(frozen=True)
class PhaseAssignment:
    """Decision trail plus phases fixed by propagation (numeric or SAT based)."""

    decisions: tuple = ()
    implied: tuple = ()

    def __post_init__(self):
        neurons = [lit.neuron for lit in self.decisions + self.implied]
        if len(set(neurons)) != len(neurons):
            raise PhaseContradiction("a neuron appears twice in the assignment")

    @property
    def phases(self) -> dict:
        return {lit.neuron: lit.active for lit in self.decisions + self.implied}

    def phase(self, neuron: NeuronId) -> int:
        p = self.phases.get(neuron)
        return UNDECIDED if p is None else (ACTIVE if p else INACTIVE)

    def fixed_literals(self) -> list[PhaseLiteral]:
        return list(self.decisions) + list(self.implied)

    def decide(self, lit: PhaseLiteral) -> PhaseAssignment:
        return PhaseAssignment(self.decisions + (lit,), self.implied)

    def imply(self, lits) -> PhaseAssignment:
        phases = self.phases
        new = []
        for lit in lits:
            cur = phases.get(lit.neuron)
            if cur is None:
                phases[lit.neuron] = lit.active
                new.append(lit)
            elif cur != lit.active:
                raise PhaseContradiction(f"{lit} contradicts fixed phase of {lit.neuron}")
        if not new:
            return self
        return PhaseAssignment(self.decisions, self.implied + tuple(new))


@dataclass
class BoundsState:
    """Per-layer intervals and phase markers for one search node."""

    input_lower: np.ndarray
    input_upper: np.ndarray
    pre_lower: list = field(default_factory=list)
    pre_upper: list = field(default_factory=list)
    post_lower: list = field(default_factory=list)
    post_upper: list = field(default_factory=list)
    phase: dict = field(default_factory=dict)  # layer index (0-based) -> int array
    empty: bool = False

    @property
    def output_lower(self):
        return self.post_lower[-1]

    @property
    def output_upper(self):
        return self.post_upper[-1]

    def pre_interval(self, n: NeuronId) -> tuple[float, float]:
        return float(self.pre_lower[n.layer - 1][n.neuron - 1]), float(self.pre_upper[n.layer - 1][n.neuron - 1])

    def post_interval(self, n: NeuronId) -> tuple[float, float]:
        return float(self.post_lower[n.layer - 1][n.neuron - 1]), float(self.post_upper[n.layer - 1][n.neuron - 1])

    def phase_of(self, n: NeuronId) -> int:
        return int(self.phase[n.layer - 1][n.neuron - 1])

    def fixed_literals(self) -> list[PhaseLiteral]:
        """All phases fixed at this node, in (layer, neuron) order."""
        out = []
        for li in sorted(self.phase):
            for j, p in enumerate(self.phase[li]):
                if p != UNDECIDED:
                    out.append(PhaseLiteral(NeuronId(li + 1, j + 1), bool(p == ACTIVE)))
        return out

    def undecided(self) -> list[NeuronId]:
        return [
            NeuronId(li + 1, j + 1)
            for li in sorted(self.phase)
            for j, p in enumerate(self.phase[li])
            if p == UNDECIDED
        ]

    def copy(self) -> BoundsState:
        return BoundsState(
            self.input_lower,
            self.input_upper,
            [a.copy() for a in self.pre_lower],
            [a.copy() for a in self.pre_upper],
            [a.copy() for a in self.post_lower],
            [a.copy() for a in self.post_upper],
            {k: v.copy() for k, v in self.phase.items()},
            self.empty,
        )


@dataclass
class PropagationResult:
    status: NodeStatus
    bounds: BoundsState
    assignment: PhaseAssignment
    witness: np.ndarray | None = None
    lp_calls: int = 0


def interval_affine(w, b, lo, hi):
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    return wp @ lo + wn @ hi + b, wp @ hi + wn @ lo + b


def _phase_vector(net: Network, layer_index: int, phases: dict) -> np.ndarray:
    width = net.layers[layer_index].out_dim
    vec = np.zeros(width, dtype=np.int8)
    for j in range(width):
        p = phases.get(NeuronId(layer_index + 1, j + 1))
        if p is not None:
            vec[j] = ACTIVE if p else INACTIVE
    return vec


def propagate(q: VerificationQuery, pi: PhaseAssignment, candidates=()) -> PropagationResult:
    """Run one round of numeric reasoning for the node identified by ``pi``."""
    net = q.network
    phases = pi.phases
    lo, hi = q.input.lower, q.input.upper
    b = BoundsState(lo, hi)
    implied = []
    for li, layer in enumerate(net.layers):
        zl, zu = interval_affine(layer.weights, layer.bias, lo, hi)
        if layer.activation == RELU:
            ph = _phase_vector(net, li, phases)
            act, ina = ph == ACTIVE, ph == INACTIVE
            if np.any(zu[act] < -EMPTY_TOL) or np.any(zl[ina] > EMPTY_TOL):
                b.empty = True
                return PropagationResult(NodeStatus.UNSAT, b, pi)
            zl = np.where(act, np.maximum(zl, 0.0), zl)
            zu = np.where(act, np.maximum(zu, zl), zu)
            zu = np.where(ina, np.minimum(zu, 0.0), zu)
            zl = np.where(ina, np.minimum(zl, zu), zl)
            und = ph == UNDECIDED
            for j in np.flatnonzero(und & (zl >= 0.0)):
                ph[j] = ACTIVE
                implied.append(PhaseLiteral(NeuronId(li + 1, j + 1), True))
            for j in np.flatnonzero(und & (zu <= 0.0) & (ph == UNDECIDED)):
                ph[j] = INACTIVE
                implied.append(PhaseLiteral(NeuronId(li + 1, j + 1), False))
            b.phase[li] = ph
            lo = np.where(ph == INACTIVE, 0.0, np.maximum(zl, 0.0))
            hi = np.where(ph == INACTIVE, 0.0, np.maximum(zu, 0.0))
        else:
            lo, hi = zl, zu
        b.pre_lower.append(zl)
        b.pre_upper.append(zu)
        b.post_lower.append(lo)
        b.post_upper.append(hi)
    pi = pi.imply(implied)

    for c in q.output:
        cp, cn = np.maximum(c.coeffs, 0.0), np.minimum(c.coeffs, 0.0)
        y_lo = cp @ lo + cn @ hi
        y_hi = cp @ hi + cn @ lo
        if c.relation.value == "<=" and y_lo > c.rhs + SAT_TOL:
            return PropagationResult(NodeStatus.UNSAT, b, pi)
        if c.relation.value == ">=" and y_hi < c.rhs - SAT_TOL:
            return PropagationResult(NodeStatus.UNSAT, b, pi)

    for x in (q.input.center, *candidates):
        x = np.asarray(x, dtype=np.float64)
        if q.input.contains_point(x) and q.is_witness(x, SAT_TOL):
            return PropagationResult(NodeStatus.SAT, b, pi, witness=x)

    if not b.undecided():
        return _leaf(q, b, pi)
    return PropagationResult(NodeStatus.UNKNOWN, b, pi)


def leaf_constraints(net: Network, phases: dict, output=()):
    """Affine constraints ``a @ x <= rhs`` for a fully fixed phase pattern.

    ``phases`` maps every ReLU neuron to True (active) or False (inactive);
    the closed relaxation ``z >= 0`` / ``z <= 0`` is used for both phases.
    """
    n = net.input_dim
    amat, aoff = np.eye(n), np.zeros(n)
    rows, rhs = [], []
    for li, layer in enumerate(net.layers):
        zm = layer.weights @ amat
        zc = layer.weights @ aoff + layer.bias
        if layer.activation == RELU:
            sign = np.array(
                [1.0 if phases[NeuronId(li + 1, j + 1)] else -1.0 for j in range(layer.out_dim)]
            )
            # active: -z <= 0 ; inactive: z <= 0
            rows.append(-sign[:, None] * zm)
            rhs.append(sign * zc)
            keep = sign > 0
            zm = zm * keep[:, None]
            zc = zc * keep
        amat, aoff = zm, zc
    for c in output:
        coeffs, r = c.as_le()
        rows.append((coeffs @ amat)[None, :])
        rhs.append(np.array([r - coeffs @ aoff]))
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def _leaf(q: VerificationQuery, b: BoundsState, pi: PhaseAssignment) -> PropagationResult:
    a, rhs = leaf_constraints(q.network, pi.phases, q.output)
    res = lp.feasible_le(q.input.lower, q.input.upper, a, rhs)
    if not res.feasible:
        return PropagationResult(NodeStatus.UNSAT, b, pi, lp_calls=1)
    if not q.is_witness(res.witness, SAT_TOL):
        raise WitnessError(f"leaf LP witness {res.witness} fails re-evaluation")
    return PropagationResult(NodeStatus.SAT, b, pi, witness=res.witness, lp_calls=1)


def apply_implied_literals(b: BoundsState, pi: PhaseAssignment, lits):
    """Fix each literal's phase and tighten that neuron's intervals.

    Raises :class:`PhaseContradiction` when a literal clashes with a fixed
    phase or empties the neuron's pre-activation interval.
    """
    b = b.copy()
    pi = pi.imply(lits)
    for lit in lits:
        li, j = lit.neuron.layer - 1, lit.neuron.neuron - 1
        zl, zu = b.pre_lower[li][j], b.pre_upper[li][j]
        if lit.active:
            if zu < -EMPTY_TOL:
                raise PhaseContradiction(f"{lit}: pre-activation upper bound {zu} < 0")
            zl = max(zl, 0.0)
            zu = max(zu, zl)
            b.post_lower[li][j], b.post_upper[li][j] = zl, zu
            b.phase[li][j] = ACTIVE
        else:
            if zl > EMPTY_TOL:
                raise PhaseContradiction(f"{lit}: pre-activation lower bound {zl} > 0")
            zu = min(zu, 0.0)
            zl = min(zl, zu)
            b.post_lower[li][j], b.post_upper[li][j] = 0.0, 0.0
            b.phase[li][j] = INACTIVE
        b.pre_lower[li][j], b.pre_upper[li][j] = zl, zu
    return b, pi


def extract_partial_assignment(b: BoundsState) -> list[PhaseLiteral]:
    return b.fixed_literals()


def output_bounds(net: Network, box) -> tuple[np.ndarray, np.ndarray]:
    """Plain interval bounds of the network outputs over ``box``."""
    lo, hi = box.lower, box.upper
    for layer in net.layers:
        lo, hi = interval_affine(layer.weights, layer.bias, lo, hi)
        if layer.activation == RELU:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return lo, hi
