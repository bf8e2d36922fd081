"""Brute-force ground truth: enumerate ReLU phase patterns and solve each LP.

Shares only the LP backend with the search; the affine encoding of a fixed
phase pattern and the forward pass used to double-check witnesses are
written independently here.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from . import lp
from .model import RELU, Network
from .query import Box, VerificationQuery, beats_constraint, freed_box

MAX_RELUS = 20
MAX_FEATURES = 12
TOL = 1e-7


class OracleError(ValueError):
    pass


class OracleVerdict(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"


@dataclass
class OracleReport:
    verdict: OracleVerdict
    witness: np.ndarray | None = None
    patterns: int = 0  # complete phase patterns whose LP was solved
    pruned: int = 0  # partial patterns discarded as infeasible

    @property
    def sat(self) -> bool:
        return self.verdict is OracleVerdict.SAT


def forward(net: Network, x) -> list[float]:
    """Straight-line forward pass kept separate from Network.evaluate."""
    vals = [float(v) for v in x]
    for layer in net.layers:
        out = []
        for row, bias in zip(layer.weights.tolist(), layer.bias.tolist()):
            s = bias
            for w, v in zip(row, vals):
                s += w * v
            out.append(max(s, 0.0) if layer.activation == RELU else s)
        vals = out
    return vals


def _validate(q: VerificationQuery, x) -> bool:
    if not q.is_witness(x, TOL):
        return False
    y = forward(q.network, x)
    return all(c.holds(y, TOL) for c in q.output)


def _output_rows(q: VerificationQuery, amat, aoff):
    rows, rhs = [], []
    for c in q.output:
        coeffs, r = c.as_le()
        rows.append(coeffs @ amat)
        rhs.append(r - coeffs @ aoff)
    return rows, rhs


def brute_force_verify(q: VerificationQuery, fixed=(), exhaustive=False) -> OracleReport:
    """Decide ``q`` exactly.

    ``fixed`` restricts the search to phase patterns agreeing with the given
    literals (closed phases: active ``z >= 0``, inactive ``z <= 0``). With
    ``exhaustive`` every one of the 2^R patterns is solved as its own LP;
    otherwise patterns sharing an infeasible prefix are discarded together,
    which decides the same thing with fewer LPs.
    """
    net = q.network
    if net.num_relus > MAX_RELUS:
        raise OracleError(f"{net.num_relus} ReLUs exceeds the oracle cap of {MAX_RELUS}")
    forced = {(lit.neuron.layer, lit.neuron.neuron): lit.active for lit in fixed}
    report = OracleReport(OracleVerdict.UNSAT)
    lower, upper = q.input.lower, q.input.upper
    n = net.input_dim
    neurons = [(li, j) for li, layer in enumerate(net.layers) if layer.activation == RELU for j in range(layer.out_dim)]

    def options(li, j):
        f = forced.get((li + 1, j + 1))
        return (False, True) if f is None else (f,)

    def leaf(pattern) -> bool:
        amat, aoff = np.eye(n), np.zeros(n)
        rows, rhs = [], []
        for li, layer in enumerate(net.layers):
            zm = layer.weights @ amat
            zc = layer.weights @ aoff + layer.bias
            if layer.activation == RELU:
                for j in range(layer.out_dim):
                    if pattern[(li, j)]:
                        rows.append(-zm[j])
                        rhs.append(zc[j])
                    else:
                        rows.append(zm[j].copy())
                        rhs.append(-zc[j])
                        zm[j] = 0.0
                        zc[j] = 0.0
            amat, aoff = zm, zc
        orows, orhs = _output_rows(q, amat, aoff)
        a = np.array(rows + orows).reshape(-1, n)
        b = np.array(rhs + orhs)
        report.patterns += 1
        res = lp.feasible_le(lower, upper, a, b)
        if res.feasible and _validate(q, res.witness):
            report.verdict, report.witness = OracleVerdict.SAT, res.witness
            return True
        return False

    if exhaustive:
        choices = [options(li, j) for li, j in neurons]
        for combo in itertools.product(*choices):
            if leaf(dict(zip(neurons, combo))):
                return report
        return report

    # depth-first over neurons in (layer, neuron) order; each partial pattern is
    # checked for feasibility of its own phase constraints before extending
    def extend(k, pattern, amat, aoff, zm, zc, rows, rhs):
        if k == len(neurons):
            return leaf(pattern)
        li, j = neurons[k]
        if zm is None:
            layer = net.layers[li]
            zm = layer.weights @ amat
            zc = layer.weights @ aoff + layer.bias
        for active in options(li, j):
            row, r = (-zm[j], zc[j]) if active else (zm[j], -zc[j])
            rows2, rhs2 = rows + [row], rhs + [r]
            if not lp.feasible_le(lower, upper, np.array(rows2).reshape(-1, n), np.array(rhs2)).feasible:
                report.pruned += 1
                continue
            pattern[(li, j)] = active
            nxt = k + 1
            if nxt == len(neurons) or neurons[nxt][0] != li:
                # layer complete: advance the affine map through any linear layers
                mask = np.array([pattern[(li, t)] for t in range(net.layers[li].out_dim)], dtype=float)
                amat2, aoff2 = zm * mask[:, None], zc * mask
                stop = neurons[nxt][0] if nxt < len(neurons) else len(net.layers)
                for lj in range(li + 1, stop):
                    lay = net.layers[lj]
                    amat2, aoff2 = lay.weights @ amat2, lay.weights @ aoff2 + lay.bias
                if nxt == len(neurons):
                    if _final(pattern, amat2, aoff2, rows2, rhs2):
                        return True
                elif extend(nxt, pattern, amat2, aoff2, None, None, rows2, rhs2):
                    return True
            elif extend(nxt, pattern, amat, aoff, zm, zc, rows2, rhs2):
                return True
            del pattern[(li, j)]
        return False

    def _final(pattern, amat, aoff, rows, rhs):
        orows, orhs = _output_rows(q, amat, aoff)
        a = np.array(rows + orows).reshape(-1, n)
        b = np.array(rhs + orhs)
        report.patterns += 1
        res = lp.feasible_le(lower, upper, a, b)
        if res.feasible and _validate(q, res.witness):
            report.verdict, report.witness = OracleVerdict.SAT, res.witness
            return True
        return False

    if not neurons:
        amat, aoff = np.eye(n), np.zeros(n)
        for layer in net.layers:
            amat, aoff = layer.weights @ amat, layer.weights @ aoff + layer.bias
        _final({}, amat, aoff, [], [])
        return report
    first = neurons[0][0]
    amat, aoff = np.eye(n), np.zeros(n)
    for layer in net.layers[:first]:
        amat, aoff = layer.weights @ amat, layer.weights @ aoff + layer.bias
    extend(0, {}, amat, aoff, None, None, [], [])
    return report


class Sufficiency(enum.Enum):
    SUFFICIENT = "sufficient"
    INSUFFICIENT = "insufficient"


def exhaustive_sufficiency(net: Network, x0, domain: Box, fixed) -> Sufficiency:
    """Is fixing the features in ``fixed`` to x0 enough to keep the predicted class?"""
    if net.input_dim > MAX_FEATURES:
        raise OracleError(f"{net.input_dim} features exceeds the oracle cap of {MAX_FEATURES}")
    y0 = forward(net, x0)
    c = int(np.argmax(y0))
    freed = sorted(set(range(net.input_dim)) - set(fixed))
    box = freed_box(x0, domain, freed)
    for j in range(net.output_dim):
        if j == c:
            continue
        q = VerificationQuery(net, box, (beats_constraint(net.output_dim, c, j),))
        if brute_force_verify(q).sat:
            return Sufficiency.INSUFFICIENT
    return Sufficiency.SUFFICIENT
