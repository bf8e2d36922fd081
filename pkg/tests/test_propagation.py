import numpy as np
import pytest

from gen import random_query, relu_net
from icaverify.model import LINEAR, RELU, Layer, Network, NeuronId, random_network
from icaverify.oracle import brute_force_verify
from icaverify.propagation import (
    ACTIVE,
    INACTIVE,
    NodeStatus,
    PhaseAssignment,
    PhaseContradiction,
    apply_implied_literals,
    output_bounds,
    propagate,
)
from icaverify.query import Box, LinearConstraint, Relation, VerificationQuery
from icaverify.satcore import PhaseLiteral

N11 = NeuronId(1, 1)


def relu_query(lo, hi, rel, rhs):
    return VerificationQuery(relu_net(), Box([lo], [hi]), (LinearConstraint([1.0], rel, rhs),))


def test_interval_certificate_unsat():
    res = propagate(relu_query(1, 2, Relation.LE, 0.0), PhaseAssignment())
    assert res.status is NodeStatus.UNSAT


def test_center_witness():
    res = propagate(relu_query(-1, 1, Relation.GE, -1.0), PhaseAssignment())
    assert res.status is NodeStatus.SAT
    assert res.witness.tolist() == [0.0]


def test_active_phase_tightens_pre_interval():
    q = relu_query(-1, 1, Relation.GE, 5.0)
    res = propagate(q, PhaseAssignment((PhaseLiteral(N11, True),)))
    assert res.bounds.pre_interval(N11) == (0.0, 1.0)


def test_inactive_phase():
    q = relu_query(-1, 1, Relation.GE, 5.0)
    res = propagate(q, PhaseAssignment((PhaseLiteral(N11, False),)))
    assert res.bounds.pre_interval(N11) == (-1.0, 0.0)
    assert res.bounds.post_interval(N11) == (0.0, 0.0)


def test_phase_contradicting_interval_is_unsat():
    q = relu_query(1, 2, Relation.GE, -5.0)
    res = propagate(q, PhaseAssignment((PhaseLiteral(N11, False),)))
    assert res.status is NodeStatus.UNSAT and res.bounds.empty


def test_implied_phase_recorded():
    q = relu_query(1, 2, Relation.GE, 10.0)
    res = propagate(q, PhaseAssignment())
    assert PhaseLiteral(N11, True) in res.assignment.implied
    assert res.bounds.phase_of(N11) == ACTIVE


def two_relu_net():
    # y = relu(x1) + relu(x2)
    return Network([Layer(np.eye(2), np.zeros(2), RELU), Layer([[1.0, 1.0]], [0.0], LINEAR)])


def test_leaf_lp_unsat_matches_oracle():
    net = two_relu_net()
    q = VerificationQuery(net, Box([-1, -1], [1, 1]), (LinearConstraint([1.0], Relation.GE, 0.5),))
    pi = PhaseAssignment((PhaseLiteral(NeuronId(1, 1), False), PhaseLiteral(NeuronId(1, 2), False)))
    res = propagate(q, pi)
    assert res.status is NodeStatus.UNSAT
    assert not brute_force_verify(q, fixed=pi.decisions).sat


def test_leaf_lp_sat_witness():
    net = two_relu_net()
    # center 0 gives y = 0 < 1.5; the LP must find the corner region
    q = VerificationQuery(net, Box([-1, -1], [1, 1]), (LinearConstraint([1.0], Relation.GE, 1.5),))
    pi = PhaseAssignment((PhaseLiteral(NeuronId(1, 1), True), PhaseLiteral(NeuronId(1, 2), True)))
    res = propagate(q, pi)
    assert res.status is NodeStatus.SAT and res.lp_calls == 1
    assert q.is_witness(res.witness)


def bounds_for(pre):
    net = Network([Layer([[1.0]], [0.0], RELU), Layer([[1.0]], [0.0], LINEAR)])
    q = VerificationQuery(net, Box([pre[0]], [pre[1]]), (LinearConstraint([1.0], Relation.GE, 99.0),))
    res = propagate(q, PhaseAssignment())
    return res.bounds, res.assignment


def test_apply_active():
    b, pi = bounds_for((-1.0, 1.0))
    b2, pi2 = apply_implied_literals(b, pi, [PhaseLiteral(N11, True)])
    assert b2.pre_interval(N11) == (0.0, 1.0) and b2.post_interval(N11) == (0.0, 1.0)
    assert pi2.implied == (PhaseLiteral(N11, True),)
    assert b.pre_interval(N11) == (-1.0, 1.0)  # input state untouched


def test_apply_inactive():
    b, pi = bounds_for((-1.0, 1.0))
    b2, _ = apply_implied_literals(b, pi, [PhaseLiteral(N11, False)])
    assert b2.pre_interval(N11) == (-1.0, 0.0) and b2.post_interval(N11) == (0.0, 0.0)


def test_apply_contradiction():
    b, pi = bounds_for((-2.0, -1.0))
    with pytest.raises(PhaseContradiction):
        apply_implied_literals(b, pi, [PhaseLiteral(N11, True)])


def test_assignment_rejects_duplicates():
    with pytest.raises(PhaseContradiction):
        PhaseAssignment((PhaseLiteral(N11, True), PhaseLiteral(N11, False)))
    pi = PhaseAssignment((PhaseLiteral(N11, True),))
    with pytest.raises(PhaseContradiction):
        pi.imply([PhaseLiteral(N11, False)])
    assert pi.imply([PhaseLiteral(N11, True)]) is pi


def random_consistent(rng, net, box):
    """A random point plus the phase assignment it induces on a random subset of neurons."""
    x = rng.uniform(box.lower, box.upper)
    pre = net.pre_activations(x)
    lits = []
    for n in net.relu_neurons():
        if rng.random() < 0.3:
            lits.append(PhaseLiteral(n, bool(pre[n.layer - 1][n.neuron - 1] >= 0)))
    return x, pre, PhaseAssignment(tuple(lits))


def test_interval_soundness_on_samples():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 1000:
        net = random_network(rng, [3, 5, 4, 2])
        lo = rng.uniform(-1, 0.5, 3)
        box = Box(lo, lo + rng.uniform(0.05, 1, 3))
        # no output constraints: only the phases can make a node infeasible
        q = VerificationQuery(net, box, ())
        for _ in range(20):
            x, pre, pi = random_consistent(rng, net, box)
            res = propagate(q, pi)
            assert res.status is not NodeStatus.UNSAT, "a point consistent with the phases exists"
            b = res.bounds
            for li, z in enumerate(pre):
                assert np.all(z >= b.pre_lower[li] - 1e-9) and np.all(z <= b.pre_upper[li] + 1e-9)
                post = np.maximum(z, 0) if net.layers[li].activation == RELU else z
                assert np.all(post >= b.post_lower[li] - 1e-9) and np.all(post <= b.post_upper[li] + 1e-9)
            # implied phases hold at the consistent point
            for lit in res.assignment.implied:
                z = pre[lit.neuron.layer - 1][lit.neuron.neuron - 1]
                assert (z >= -1e-7) if lit.active else (z <= 1e-7)
            checked += 1


def test_unsat_soundness_and_leaf_completeness():
    rng = np.random.default_rng(11)
    unsat = 0
    for _ in range(150):
        net = random_network(rng, [2, 4, 2])
        q = random_query(rng, net)
        relus = net.relu_neurons()
        k = int(rng.integers(0, len(relus) + 1))
        picks = rng.choice(len(relus), k, replace=False)
        pi = PhaseAssignment(tuple(PhaseLiteral(relus[i], bool(rng.random() < 0.5)) for i in picks))
        res = propagate(q, pi)
        if res.status is NodeStatus.UNSAT:
            unsat += 1
            assert not brute_force_verify(q, fixed=pi.decisions).sat
        if res.status is NodeStatus.SAT:
            assert q.is_witness(res.witness)
        if k == len(relus):
            assert res.status is not NodeStatus.UNKNOWN
    assert unsat > 0


def test_output_bounds_contain_samples():
    rng = np.random.default_rng(2)
    net = random_network(rng, [2, 6, 3])
    box = Box([-1, -1], [1, 1])
    lo, hi = output_bounds(net, box)
    for x in rng.uniform(-1, 1, (500, 2)):
        y = net.evaluate(x)
        assert np.all(y >= lo - 1e-9) and np.all(y <= hi + 1e-9)


def test_fixed_literals_ordering():
    net = random_network(np.random.default_rng(0), [2, 3, 2])
    q = VerificationQuery(net, Box([0, 0], [0, 0]), (LinearConstraint([1, 0], Relation.GE, 1e6),))
    res = propagate(q, PhaseAssignment())
    lits = res.bounds.fixed_literals()
    assert [l.neuron for l in lits] == sorted(l.neuron for l in lits)
    assert len(lits) == 3  # a single point fixes every phase
    assert all(res.bounds.phase_of(l.neuron) in (ACTIVE, INACTIVE) for l in lits)
