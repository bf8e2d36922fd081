"""Depth-first branch and bound over ReLU phases with conflict reuse."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .ica import ICAState, IcaStatus
from .model import NeuronId
from .propagation import BoundsState, NodeStatus, PhaseAssignment, propagate
from .query import VerificationQuery
from .satcore import PhaseLiteral

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    TIMEOUT = "timeout"


@dataclass
class SolveConfig:
    timeout: float = 60.0
    split_heuristic: str = "widest"
    candidates: tuple = ()
    trusted_refinement: bool = False
    node_cap: int | None = None

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.split_heuristic != "widest":
            raise ValueError(f"unknown split heuristic {self.split_heuristic!r}")


@dataclass
class SolveStats:
    nodes: int = 0
    numeric_prunes: int = 0
    ica_prunes: int = 0
    ica_propagations: int = 0
    conflicts_recorded: int = 0
    inherited_clauses: int = 0
    lp_calls: int = 0
    time_s: float = 0.0

    def add(self, other: SolveStats):
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class SolveResult:
    verdict: Verdict
    stats: SolveStats = field(default_factory=SolveStats)
    witness: np.ndarray | None = None

    def to_dict(self) -> dict:
        s = self.stats
        d = {
            "verdict": self.verdict.value,
            "nodes": s.nodes,
            "numeric_prunes": s.numeric_prunes,
            "ica_prunes": s.ica_prunes,
            "ica_propagations": s.ica_propagations,
            "conflicts_recorded": s.conflicts_recorded,
            "inherited_clauses": s.inherited_clauses,
            "time_s": s.time_s,
        }
        if self.witness is not None:
            d["witness"] = [float(v) for v in self.witness]
        return d


def choose_split(b: BoundsState) -> NeuronId:
    """Undecided neuron with the widest pre-activation interval straddling zero."""
    best, best_width = None, -1.0
    for n in b.undecided():
        lo, hi = b.pre_interval(n)
        if lo < 0.0 < hi and hi - lo > best_width:
            best, best_width = n, hi - lo
    assert best is not None, "no splittable neuron at an UNKNOWN node"
    return best


def extract_conflict(pi: PhaseAssignment) -> frozenset:
    """The decision literals of an infeasible node (implied ones are dropped)."""
    return frozenset(pi.decisions)


def solve(q: VerificationQuery, qid: int, inherit, ica: ICAState, cfg: SolveConfig | None = None) -> SolveResult:
    cfg = cfg or SolveConfig()
    start = time.perf_counter()
    stats = SolveStats()
    ica.begin_query(inherit)
    ica.pool.touch(qid)
    stats.inherited_clauses = ica.inherited_clauses

    def finish(verdict, witness=None):
        stats.ica_prunes = ica.counters.prunes
        stats.ica_propagations = ica.counters.propagations
        stats.time_s = time.perf_counter() - start
        if witness is not None:
            assert q.is_witness(witness), "SAT witness failed re-evaluation"
        return SolveResult(verdict, stats, witness)

    stack = [PhaseAssignment()]
    while stack:
        if stats.nodes and (
            time.perf_counter() - start > cfg.timeout
            or (cfg.node_cap is not None and stats.nodes >= cfg.node_cap)
        ):
            return finish(Verdict.TIMEOUT)
        pi = stack.pop()
        stats.nodes += 1
        while True:
            res = propagate(q, pi, cfg.candidates)
            stats.lp_calls += res.lp_calls
            if res.status is NodeStatus.SAT:
                return finish(Verdict.SAT, res.witness)
            if res.status is NodeStatus.UNSAT:
                stats.numeric_prunes += 1
                if ica.record_conflict(qid, extract_conflict(pi)):
                    stats.conflicts_recorded += 1
                break
            status, bounds, pi, n_implied = ica.propagate(res.bounds, res.assignment)
            if status is IcaStatus.UNSAT:
                break
            if n_implied:
                # implied phases feed back into numeric propagation
                continue
            r = choose_split(bounds)
            stack.append(pi.decide(PhaseLiteral(r, True)))
            stack.append(pi.decide(PhaseLiteral(r, False)))
            break
    return finish(Verdict.UNSAT)
