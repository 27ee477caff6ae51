from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from abstool import generators as g
from abstool.approx_bisim import pair_network
from abstool.lmc_core import Lmc
from abstool.relations import Relation
from abstool.solvers import (
    INFINITE,
    Constraint,
    FlowNetwork,
    always_probability,
    bounded_reach,
    expected_steps,
    lp_feasible,
    max_flow,
    min_cut,
    solve_linear,
    trace_set_probability,
    until_probability,
)
from modelgen import random_distribution

F = Fraction


def idx(m, *xs):
    return frozenset(m.index(x) for x in xs)


def test_solve_linear_small():
    a = [[F(2), F(1)], [F(1), F(3)]]
    assert solve_linear(a, [F(3), F(5)]) == [F(4, 5), F(7, 5)]


def test_until_geometric_exit():
    m = g.tight_unbounded(F(1, 3), F(1, 8))
    s = m.index("s")
    assert until_probability(m, s, idx(m, "s"), idx(m, "q")) == F(1, 2)


def test_until_target_contains_start():
    m = g.chain(3)
    assert until_probability(m, 0, frozenset(), {0}) == 1


def test_until_through_stutter_states():
    eps = F(1, 8)
    left, _ = g.weak_branching_incomparable(eps)
    t = left.index("t")
    got = until_probability(left, t, left.same_label(t), idx(left, "x"))
    assert got == F(5, 8) + F(5, 4) * eps - eps * eps == F(49, 64)


def test_always_absorbing():
    m = g.chain(2)
    x = m.index("x")
    assert always_probability(m, x, {x}) == 1


def test_always_on_divergent_example():
    eps = F(1, 8)
    m = g.mr_example(eps, F(1, 4))
    assert always_probability(m, m.index("p"), idx(m, "p", "q")) == 0
    cls = idx(m, "s", "t", "s1", "t1")
    assert always_probability(m, m.index("s"), cls) == 1 - eps
    assert always_probability(m, m.index("t"), cls) >= 1 - eps


def test_bounded_reach():
    eps = F(1, 8)
    n = 3
    m = g.tight_bounded(n, eps)
    g1, g2 = idx(m, "G1"), idx(m, "G2")
    assert bounded_reach(m, m.index("G1"), g1, 0) == 1
    assert bounded_reach(m, m.index("s0"), g1, n + 1) == 1
    assert bounded_reach(m, m.index("s0"), g1, n) == 0
    assert bounded_reach(m, m.index("t0"), g2, n + 1) == (1 - eps) ** (n + 1)


def test_trace_set_probability():
    eps = F(1, 8)
    n = 2
    m = g.tight_bounded(n, eps)
    s0, t0 = m.index("s0"), m.index("t0")
    assert trace_set_probability(m, s0, [(m.labels[s0],)]) == 1
    assert trace_set_probability(m, s0, []) == 0
    lab = [frozenset({f"a{i}"}) for i in range(n + 1)]
    goal = frozenset({"g"})
    traces = [tuple(lab) + (goal,)]
    assert trace_set_probability(m, s0, traces) == 1
    assert trace_set_probability(m, t0, traces) == (1 - eps) ** (n + 1)


def test_trace_lengths_must_agree():
    m = g.chain(1)
    with pytest.raises(ValueError):
        trace_set_probability(m, 0, [(frozenset(),), (frozenset(), frozenset())])


def test_expected_steps():
    p = F(1, 3)
    m = g.tight_unbounded(p, F(1, 8))
    absorb = idx(m, "q", "r")
    assert expected_steps(m, m.index("s"), absorb) == 1 / p
    assert expected_steps(m, m.index("q"), absorb) == 0
    assert expected_steps(m, m.index("t"), absorb) is INFINITE


def test_expected_steps_is_tail_sum():
    m = g.chain(3)
    x = frozenset({m.index("x")})
    # Pr(N >= i) = 1 - Pr(reach x within i - 1 steps)
    tail = sum(1 - bounded_reach(m, 0, x, i - 1) for i in range(1, 101))
    assert expected_steps(m, 0, x) == tail


def test_infinite_orders_above_numbers():
    assert INFINITE > F(10**9)
    assert not INFINITE < 5
    assert INFINITE >= INFINITE
    assert str(INFINITE) == "infinite"


def test_max_flow_single_arc():
    net = FlowNetwork(("a", "b"), (("a", "b", F(3, 4)),), "a", "b")
    assert max_flow(net) == F(3, 4)


def test_max_flow_two_paths():
    arcs = (("s", "u", F(1)), ("u", "t", F(1)), ("s", "v", F(1)), ("v", "t", F(1)))
    net = FlowNetwork(("s", "t", "u", "v"), arcs, "s", "t")
    assert max_flow(net) == 2
    value, side = min_cut(net)
    assert value == 2 and side == {"s"}


def test_pair_network_flow_on_nonunique_example():
    eps = F(1, 8)
    m = g.nonunique(eps)
    r = Relation.identity(m.n)
    net = pair_network(m, r, m.index("s"), m.index("t"), F(0))
    assert max_flow(net) == 1 - eps


def _cut_oracle(net: FlowNetwork) -> Fraction:
    inner = [x for x in net.nodes if x not in (net.source, net.sink)]
    best = None
    for bits in itertools.product((0, 1), repeat=len(inner)):
        side = {net.source} | {x for x, b in zip(inner, bits) if b}
        total = F(0)
        for u, v, cap in net.arcs:
            if u in side and v not in side:
                if cap is None:
                    break
                total += cap
        else:
            best = total if best is None else min(best, total)
    return best


@given(st.integers(0, 10_000))
def test_max_flow_equals_min_cut(seed):
    rng = random.Random(seed)
    k = rng.randint(1, 6)
    nodes = ["s", "t"] + [f"v{i}" for i in range(k)]
    arcs = []
    for u in nodes:
        for v in nodes:
            if u != v and v != "s" and u != "t" and rng.random() < 0.4:
                cap = None if rng.random() < 0.1 else F(rng.randint(0, 8), rng.randint(1, 4))
                arcs.append((u, v, cap))
    net = FlowNetwork(tuple(nodes), tuple(arcs), "s", "t")
    oracle = _cut_oracle(net)
    if oracle is not None:
        assert max_flow(net) == oracle


def test_lp_single_equality():
    assert lp_feasible(1, [Constraint({0: F(1)}, "==", F(1))]) == (F(1),)


def test_lp_infeasible():
    cons = [Constraint({0: F(1), 1: F(1)}, "==", F(1)), Constraint({0: F(1)}, ">=", F(2))]
    assert lp_feasible(2, cons) is None


def test_lp_rejects_bad_operator():
    with pytest.raises(ValueError):
        lp_feasible(1, [Constraint({0: F(1)}, "<", F(1))])


@given(st.integers(0, 10_000))
def test_lp_point_satisfies_constraints(seed):
    rng = random.Random(seed)
    nvars = rng.randint(1, 3)
    cons = []
    for _ in range(rng.randint(1, 4)):
        coeffs = {j: F(rng.randint(-3, 3)) for j in range(nvars)}
        cons.append(Constraint(coeffs, rng.choice(["<=", ">=", "=="]), F(rng.randint(-4, 4))))
    point = lp_feasible(nvars, cons)
    if point is None:
        return
    assert all(x >= 0 for x in point)
    for c in cons:
        lhs = sum(v * point[j] for j, v in c.coeffs.items())
        assert {"<=": lhs <= c.rhs, ">=": lhs >= c.rhs, "==": lhs == c.rhs}[c.op]


def _dag_lmc(rng: random.Random, n: int) -> Lmc:
    """States 0..n-1 only step forward; the last two are absorbing."""
    states = [(f"s{i}", ["a"] if i % 2 else []) for i in range(n)]
    trans = []
    for i in range(n - 2):
        support = rng.sample(range(i + 1, n), rng.randint(1, min(3, n - i - 1)))
        trans += [(f"s{i}", f"s{j}", p) for j, p in random_distribution(rng, support, 8).items()]
    trans += [(f"s{n - 2}", f"s{n - 2}", 1), (f"s{n - 1}", f"s{n - 1}", 1)]
    return Lmc.build(states, trans)


def _paths_until(m: Lmc, s: int, allowed, target, h: int) -> Fraction:
    if s in target:
        return F(1)
    if s not in allowed or h == 0:
        return F(0)
    return sum((p * _paths_until(m, v, allowed, target, h - 1) for v, p in m.rows[s].items()), F(0))


@given(st.integers(0, 10_000))
def test_until_matches_path_enumeration_on_dags(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 6)
    m = _dag_lmc(rng, n)
    allowed = frozenset(i for i in range(n) if rng.random() < 0.7)
    target = frozenset({n - 1})
    for s in range(n):
        assert until_probability(m, s, allowed, target) == _paths_until(m, s, allowed, target, n)
