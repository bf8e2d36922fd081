"""Task drivers that issue refinement-ordered families of verification queries.

* robustness radius: bisection-like search for the largest safe L-inf ball;
* input splitting: recursive box halving with growing timeouts;
* minimal sufficient feature sets: binary search over features to free.

All three share one :class:`ICAState`. Misclassification is expressed as one
conjunctive query per rival class (``y_rival >= y_target``), so every query
chain, and every inheritance set, is kept per rival class.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .bab import SolveConfig, SolveResult, SolveStats, Verdict, solve
from .ica import ICAState
from .model import Network
from .propagation import output_bounds
from .query import Box, Refinement, VerificationQuery, beats_constraint, check_refinement, freed_box

log = logging.getLogger(__name__)


class TaskError(ValueError):
    pass


def predicted_class(net: Network, x0, require_unique=True) -> int:
    y = net.evaluate(x0)
    c = int(np.argmax(y))
    if require_unique and np.sum(y == y[c]) > 1:
        raise TaskError(f"prediction at x0 is not unique: {y}")
    return c


@dataclass
class IssuedQuery:
    pool_id: int
    call: int
    rival: int
    query: VerificationQuery
    inherit: frozenset
    verdict: Verdict
    nodes: int


class ClassQueries:
    """Issues one query per rival class for each driver-level Verify call.

    Keeps the mapping from driver call ids to per-class pool ids, and filters
    inheritance sets so a class only inherits from its own chain.
    """

    def __init__(self, net: Network, target: int, ica: ICAState, incremental=True, trusted=False, external=()):
        self.net = net
        # (pool id, query) pairs from earlier runs; inherited wherever refinement is proven
        self.external = list(external)
        self.target = target
        self.ica = ica
        self.incremental = incremental
        self.trusted = trusted
        self.rivals = [j for j in range(net.output_dim) if j != target]
        self.constraints = {j: beats_constraint(net.output_dim, target, j) for j in self.rivals}
        self.calls: dict[int, dict[int, IssuedQuery]] = {}
        self.issued: list[IssuedQuery] = []
        self.stats = SolveStats()
        self.rejected_inherits = 0
        self._next_call = 0
        self._next_pool = max(ica.pool.ids(), default=-1) + 1

    def new_call(self) -> int:
        cid = self._next_call
        self._next_call += 1
        self.calls[cid] = {}
        return cid

    def _inherit(self, rival: int, query: VerificationQuery, inherit_calls) -> frozenset:
        ids = set()
        for cid in inherit_calls:
            prev = self.calls.get(cid, {}).get(rival)
            if prev is None:
                continue
            if not self.trusted:
                verdict = check_refinement(query, prev.query)
                if verdict is not Refinement.REFINES:
                    log.warning("query on rival %d does not refine pool id %d (%s); not inherited", rival, prev.pool_id, verdict.value)
                    self.rejected_inherits += 1
                    continue
            ids.add(prev.pool_id)
        for pool_id, origin in self.external:
            if check_refinement(query, origin) is Refinement.REFINES:
                ids.add(pool_id)
        return frozenset(ids)

    def verify(self, cid: int, box: Box, inherit_calls, timeout: float, candidates=()):
        """Run the rival-class queries for one call.

        Returns (verdict, witness): SAT as soon as one rival query is SAT,
        TIMEOUT if none is SAT but one timed out, UNSAT otherwise.
        """
        timed_out = False
        for j in self.rivals:
            pool_id = self._next_pool
            self._next_pool += 1
            q = VerificationQuery(self.net, box, (self.constraints[j],), pool_id)
            inherit = self._inherit(j, q, inherit_calls) if self.incremental else frozenset()
            cfg = SolveConfig(timeout=max(timeout, 1e-9), candidates=tuple(candidates), trusted_refinement=self.trusted)
            res = solve(q, pool_id, inherit, self.ica, cfg)
            self.stats.add(res.stats)
            rec = IssuedQuery(pool_id, cid, j, q, inherit, res.verdict, res.stats.nodes)
            self.calls[cid][j] = rec
            self.issued.append(rec)
            if res.verdict is Verdict.SAT:
                return Verdict.SAT, res.witness
            timed_out |= res.verdict is Verdict.TIMEOUT
        return (Verdict.TIMEOUT if timed_out else Verdict.UNSAT), None


# -- robustness radius ---------------------------------------------------------


@dataclass
class RadiusTask:
    network: Network
    x0: np.ndarray
    target: int | None = None
    eps_min: float = 0.0
    eps_max: float = 1.0
    delta: float = 0.001
    budget: float = 60.0
    query_timeout: float = 10.0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        c = predicted_class(self.network, self.x0)
        if self.target is None:
            self.target = c
        elif self.target != c:
            raise TaskError(f"target class {self.target} is not the prediction {c} at x0")
        if not self.eps_min < self.eps_max:
            raise TaskError("eps_min must be below eps_max")
        if not self.delta > 0:
            raise TaskError("delta must be positive")


@dataclass
class RadiusResult:
    eps_lower: float
    eps_upper: float
    queries: int
    stats: SolveStats
    steps: list = field(default_factory=list)  # (eps, verdict, eps_lower, eps_upper)
    issued: list = field(default_factory=list)
    completed: bool = True

    def to_dict(self) -> dict:
        s = self.stats
        return {
            "eps_lower": self.eps_lower,
            "eps_upper": self.eps_upper,
            "width": self.eps_upper - self.eps_lower,
            "completed": self.completed,
            "queries": self.queries,
            "nodes": s.nodes,
            "numeric_prunes": s.numeric_prunes,
            "ica_prunes": s.ica_prunes,
            "ica_propagations": s.ica_propagations,
            "conflicts_recorded": s.conflicts_recorded,
            "inherited_clauses": s.inherited_clauses,
            "time_s": s.time_s,
            "steps": [[e, v, lo, hi] for e, v, lo, hi in self.steps],
        }


def robustness_radius(
    task: RadiusTask, ica: ICAState, incremental=True, trusted=False, check_bracket=True, external=()
) -> RadiusResult:
    """Narrow ``[eps_lower, eps_upper]`` around the local robustness radius.

    Each candidate radius is verified; UNSAT raises the lower bound, SAT
    lowers the upper bound to the counterexample's distance from x0, and a
    timeout shrinks the step and alternates the probing direction. Queries
    inherit conflicts from earlier queries of the same rival class issued at
    a strictly larger radius.
    """
    start = time.perf_counter()
    fam = ClassQueries(task.network, task.target, ica, incremental, trusted, external)
    radius_of: dict[int, float] = {}

    def remaining():
        return task.budget - (time.perf_counter() - start)

    def verify(eps):
        cid = fam.new_call()
        radius_of[cid] = eps
        inherit = [c for c, e in radius_of.items() if e > eps and c != cid]
        timeout = min(task.query_timeout, max(remaining(), 1e-9))
        return fam.verify(cid, Box.around(task.x0, eps), inherit, timeout, candidates=(task.x0,))

    lower, upper = task.eps_min, task.eps_max
    if check_bracket:
        res_hi, _ = verify(task.eps_max)
        res_lo, _ = verify(task.eps_min)
        if res_lo is not Verdict.UNSAT or res_hi is not Verdict.SAT:
            raise TaskError(
                f"invalid bracket: eps_min gives {res_lo.value}, eps_max gives {res_hi.value}"
            )

    step_ratio, down = 0.5, True
    steps = []
    while upper - lower > task.delta and remaining() > 0:
        w = upper - lower
        eps = upper - step_ratio * w if down else lower + step_ratio * w
        verdict, x_ce = verify(eps)
        if verdict is Verdict.UNSAT:
            lower = eps
            step_ratio, down = 0.5, True
        elif verdict is Verdict.SAT:
            upper = float(np.max(np.abs(x_ce - task.x0)))
            step_ratio, down = 0.5, True
        else:
            if down:
                step_ratio /= 2.0
                down = False
            else:
                down = True
        steps.append((eps, verdict.value, lower, upper))
    fam.stats.time_s = time.perf_counter() - start
    return RadiusResult(
        lower, upper, len(fam.issued), fam.stats, steps, fam.issued, completed=upper - lower <= task.delta
    )


# -- input splitting -------------------------------------------------------------


@dataclass
class SplitTask:
    query: VerificationQuery
    t0: float = 5.0
    alpha: float = 1.5
    global_timeout: float = 600.0

    def __post_init__(self):
        if not self.t0 > 0:
            raise TaskError("initial timeout must be positive")
        if not self.alpha >= 1:
            raise TaskError("timeout factor must be at least 1")


def timeout_schedule(t0: float, alpha: float, depth: int) -> list[float]:
    return [t0 * alpha**k for k in range(depth)]


@dataclass
class SplitNode:
    id: int
    box: Box
    timeout: float
    inherit: frozenset
    verdict: Verdict
    depth: int
    split_dim: int | None = None
    children: tuple = ()


def input_split_verify(task: SplitTask, ica: ICAState, incremental=True, inherit=frozenset()):
    """Verify ``task.query``, halving the widest input dimension on timeouts.

    ``inherit`` seeds the inheritance set of the root query; the caller is
    responsible for it holding only ids the query refines.

    Returns ``(SolveResult, nodes)`` where ``nodes`` lists every issued
    sub-query in issue order.
    """
    start = time.perf_counter()
    stats = SolveStats()
    nodes: list[SplitNode] = []
    base_id = max(ica.pool.ids(), default=-1) + 1
    counter = [0]
    witness = [None]

    def search(box: Box, timeout: float, inherit: frozenset, depth: int) -> Verdict:
        left_over = task.global_timeout - (time.perf_counter() - start)
        if left_over <= 0:
            return Verdict.TIMEOUT
        qid = base_id + counter[0]
        counter[0] += 1
        q = task.query.with_input(box, id=qid)
        res = solve(q, qid, inherit if incremental else (), ica, SolveConfig(timeout=min(timeout, left_over)))
        stats.add(res.stats)
        node = SplitNode(qid, box, timeout, inherit, res.verdict, depth)
        nodes.append(node)
        if res.verdict is Verdict.SAT:
            witness[0] = res.witness
            return Verdict.SAT
        if res.verdict is Verdict.UNSAT:
            return Verdict.UNSAT
        widths = box.widths
        v = int(np.argmax(widths))
        if widths[v] <= 0.0:
            raise TaskError("query times out on a single point; the box cannot be split further")
        mid = (box.lower[v] + box.upper[v]) / 2.0
        child_inherit = inherit | {qid}
        node.split_dim = v
        left_box = box.with_bounds(v, box.lower[v], mid)
        right_box = box.with_bounds(v, mid, box.upper[v])
        node.children = (left_box, right_box)
        res_l = search(left_box, task.alpha * timeout, child_inherit, depth + 1)
        if res_l is Verdict.SAT:
            return Verdict.SAT
        res_r = search(right_box, task.alpha * timeout, child_inherit, depth + 1)
        if res_r is Verdict.SAT:
            return Verdict.SAT
        if res_l is Verdict.UNSAT and res_r is Verdict.UNSAT:
            return Verdict.UNSAT
        return Verdict.TIMEOUT

    verdict = search(task.query.input, task.t0, frozenset(inherit) if incremental else frozenset(), 0)
    stats.time_s = time.perf_counter() - start
    return SolveResult(verdict, stats, witness[0]), nodes


# -- minimal sufficient feature sets --------------------------------------------------


@dataclass
class MsfsTask:
    network: Network
    x0: np.ndarray
    domain: Box
    query_timeout: float = 10.0
    budget: float = 600.0
    ordering: str = "sensitivity"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        if not self.domain.contains_point(self.x0):
            raise TaskError("x0 lies outside the feature domain")
        if self.ordering not in ("sensitivity", "index"):
            raise TaskError(f"unknown ordering {self.ordering!r}")


@dataclass
class MsfsResult:
    fixed: list
    freed: list
    order: list
    stats: SolveStats
    trace: list = field(default_factory=list)  # (elapsed seconds, |fixed|)
    issued: list = field(default_factory=list)
    singleton_fixed: list = field(default_factory=list)  # (feature, freed set at that moment)
    completed: bool = True

    def to_dict(self) -> dict:
        s = self.stats
        return {
            "fixed": sorted(self.fixed),
            "freed": sorted(self.freed),
            "explanation_size": len(self.fixed),
            "order": self.order,
            "completed": self.completed,
            "queries": len(self.issued),
            "nodes": s.nodes,
            "numeric_prunes": s.numeric_prunes,
            "ica_prunes": s.ica_prunes,
            "ica_propagations": s.ica_propagations,
            "conflicts_recorded": s.conflicts_recorded,
            "inherited_clauses": s.inherited_clauses,
            "time_s": s.time_s,
            "trace": [[t, k] for t, k in self.trace],
        }


def feature_order(net: Network, x0, domain: Box, target: int) -> list[int]:
    """Features sorted from least to most sensitive.

    The score of feature i is the widest interval of ``y_target - y_rival``
    over rivals when only feature i ranges over the domain.
    """
    scores = []
    for i in range(net.input_dim):
        lo, hi = output_bounds(net, freed_box(x0, domain, [i]))
        widths = [(hi[target] - lo[target]) + (hi[j] - lo[j]) for j in range(net.output_dim) if j != target]
        scores.append(max(widths, default=0.0))
    return sorted(range(net.input_dim), key=lambda i: (scores[i], i))


def msfs_extract(task: MsfsTask, ica: ICAState, incremental=True, trusted=False, external=()) -> MsfsResult:
    """Split the features into a sufficient fixed set and a certified freed set.

    Anytime: when the budget runs out, every still-unresolved candidate is
    put into the fixed set, which keeps the fixed set sufficient.
    """
    start = time.perf_counter()
    net, x0 = task.network, task.x0
    target = predicted_class(net, x0)
    fam = ClassQueries(net, target, ica, incremental, trusted, external)
    if task.ordering == "sensitivity":
        order = feature_order(net, x0, task.domain, target)
    else:
        order = list(range(net.input_dim))
    fixed: list[int] = []
    freed: list[int] = []
    trace = [(0.0, 0)]
    singleton_fixed = []
    exhausted = [False]

    def elapsed():
        return time.perf_counter() - start

    def note():
        trace.append((elapsed(), len(fixed)))

    def verify(candidates, inherit):
        cid = fam.new_call()
        box = freed_box(x0, task.domain, freed + list(candidates))
        timeout = min(task.query_timeout, max(task.budget - elapsed(), 1e-9))
        verdict, _ = fam.verify(cid, box, inherit, timeout)
        return cid, verdict

    def out_of_budget(cand) -> bool:
        if elapsed() < task.budget:
            return False
        exhausted[0] = True
        fixed.extend(cand)
        note()
        return True

    def search(cand: list, inherit: frozenset):
        if out_of_budget(cand):
            return
        if len(cand) == 1:
            _, res = verify(cand, inherit)
            if res is Verdict.UNSAT:
                freed.extend(cand)
            else:
                singleton_fixed.append((cand[0], tuple(freed)))
                fixed.extend(cand)
                note()
            return
        mid = len(cand) // 2
        left, right = cand[:mid], cand[mid:]
        id_left, res_left = verify(left, inherit)
        if res_left is Verdict.UNSAT:
            freed.extend(left)
            if out_of_budget(right):
                return
            id_right, res_right = verify(right, inherit)
            if res_right is Verdict.UNSAT:
                freed.extend(right)
            else:
                search(right, inherit | {id_right})
        else:
            if len(left) == 1:
                singleton_fixed.append((left[0], tuple(freed)))
                fixed.extend(left)
                note()
            else:
                search(left, inherit | {id_left})
            search(right, inherit)

    search(order, frozenset())
    fam.stats.time_s = elapsed()
    return MsfsResult(
        fixed, freed, order, fam.stats, trace, fam.issued, singleton_fixed, completed=not exhausted[0]
    )
