from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from abstool import generators as g
from abstool.approx_bisim import exact_bisimilarity, greatest_eps_bisimilarity
from abstool.lmc_core import (
    Centroid,
    Lmc,
    LmcError,
    Perturbation,
    apply_perturbation,
    direct_sum,
    parse_lmc,
    parse_rat,
    quotient,
    serialize_lmc,
)
from abstool.relations import Partition
from modelgen import all_subsets, random_lmc, random_perturbation

F = Fraction

GOOD = """\
# two states
state s {a}
state t {b, c}
init s
s -> s : 1/2
s -> t : 0.5
t -> t : 1
"""


def test_parse_basic():
    m = parse_lmc(GOOD)
    assert m.names == ("s", "t")
    assert m.labels[1] == frozenset({"b", "c"})
    assert m.rows[0] == {0: F(1, 2), 1: F(1, 2)}
    assert m.init == 0


def test_decimal_is_exact():
    assert parse_rat("0.25") == F(1, 4)
    assert parse_rat("3/8") == F(3, 8)
    assert isinstance(parse_rat("0.1"), Fraction)


@pytest.mark.parametrize("text", ["-1/2", "1e-3", "abc", "1/0", ""])
def test_bad_rationals(text):
    with pytest.raises(LmcError):
        parse_rat(text)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("state s {a}\ninit s\ns -> s : 99/100\n", "1/100"),
        ("state s {a}\nstate s {b}\ninit s\ns -> s : 1\n", "duplicate state"),
        ("state s {a}\ninit s\ns -> u : 1\n", "unknown state"),
        ("state s {a}\ns -> s : 1\n", "missing init"),
        ("state s {a}\ninit q\ns -> s : 1\n", "unknown init"),
        ("state s {a}\ninit s\ns -> s : 1\ns -> s : 1\n", "duplicate transition"),
        ("state s {a}\ninit s\nbogus\n", "syntax error"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(LmcError, match=fragment):
        parse_lmc(text)


def test_row_sum_error_names_the_deficit():
    with pytest.raises(LmcError) as info:
        parse_lmc("state s {a}\nstate t {a}\ninit s\ns -> t : 9/10\nt -> t : 1\n")
    assert "9/10" in str(info.value) and "1/10" in str(info.value)


def test_round_trip_fixed():
    m = parse_lmc(GOOD)
    assert parse_lmc(serialize_lmc(m)) == m


@given(st.integers(0, 10_000))
def test_round_trip_random(seed):
    m = random_lmc(random.Random(seed))
    assert parse_lmc(serialize_lmc(m)) == m


def test_direct_sum_shapes():
    a = g.chain(1)
    b = g.chain(2)
    d = direct_sum(a, b)
    assert d.n == a.n + b.n
    assert d.init == a.init
    assert d.labels == a.labels + b.labels
    for i in range(a.n):
        assert all(j < a.n for j in d.rows[i])
    for i in range(a.n, d.n):
        assert all(j >= a.n for j in d.rows[i])


def test_direct_sum_with_itself_prefixes_names():
    m = g.chain(2)
    d = direct_sum(m, m)
    assert d.n == 2 * m.n
    assert d.names[0] == "M." + m.names[0]
    assert d.names[m.n] == "N." + m.names[0]
    shifted = tuple({j - m.n: p for j, p in row.items()} for row in d.rows[m.n:])
    assert shifted == m.rows


def test_quotient_matches_lumped_model():
    ms, _, q = g.ms_mt_q(F(1, 8))
    qm = quotient(ms, exact_bisimilarity(ms))
    s, u2 = qm.index("[s]"), qm.index("[u2]")
    assert qm.rows[s][u2] == F(1, 2)
    assert serialize_lmc(qm) == serialize_lmc(q)


def test_quotient_identity_is_isomorphic():
    m = g.strictly_finer(F(1, 8))
    qm = quotient(m, Partition.singletons(m.n))
    assert qm.n == m.n
    assert [r for r in qm.rows] == [r for r in m.rows]
    assert qm.names == tuple(f"[{x}]" for x in m.names)


def test_quotient_rejects_unbisimilar_block():
    m = g.strictly_finer(F(1, 8))
    p = Partition.from_blocks(m.n, [[m.index("u1"), m.index("u2")]], fill=True)
    with pytest.raises(LmcError, match="rows disagree"):
        quotient(m, p)


def test_centroid_quotient_infeasible_on_divergent_example():
    m = g.mr_example(F(1, 8), F(1, 4))
    blocks = [["s", "t", "s1", "t1"], ["p", "q"], ["x"]]
    p = Partition.from_blocks(m.n, [[m.index(x) for x in b] for b in blocks])
    with pytest.raises(LmcError, match="no centroid"):
        quotient(m, p, Centroid(F(1, 8)))


def test_centroid_quotient_rows_near_members():
    eps = F(1, 8)
    m = g.strictly_finer(eps)
    p = Partition.from_blocks(m.n, [[m.index("u1"), m.index("u2")]], fill=True)
    qm = quotient(m, p, Centroid(eps))
    u = qm.index("[u1]")
    for name in ("u1", "u2"):
        row = {qm.index(f"[{m.names[j]}]"): v for j, v in m.rows[m.index(name)].items()}
        dist = sum(abs(qm.rows[u].get(k, 0) - row.get(k, 0)) for k in set(row) | set(qm.rows[u]))
        assert dist <= eps


def test_quotient_is_bisimilar_to_original():
    rng = random.Random(7)
    for _ in range(20):
        m = random_lmc(rng, n=5)
        qm = quotient(m, exact_bisimilarity(m))
        d = direct_sum(m, qm)
        r = greatest_eps_bisimilarity(d, F(0))
        assert (d.init, m.n + qm.init) in r


def test_zero_perturbation():
    m = g.chain(3)
    new, dist = apply_perturbation(m, Perturbation(m.rows))
    assert new == m
    assert set(dist) == {0}


def test_moving_mass_doubles_in_l1():
    ms, _, _ = g.ms_mt_q(F(1, 8))
    u2, v, w = ms.index("u2"), ms.index("v"), ms.index("w")
    delta = F(1, 16)
    rows = list(ms.rows)
    rows[u2] = {v: rows[u2][v] - delta, w: rows[u2][w] + delta}
    _, dist = apply_perturbation(ms, Perturbation(tuple(rows)))
    assert dist[u2] == 2 * delta
    assert sum(dist) == 2 * delta


def test_perturbation_rows_validated():
    with pytest.raises(LmcError, match="sums to"):
        Perturbation(({0: F(1, 2)},))
    with pytest.raises(LmcError, match="negative"):
        Perturbation(({0: F(3, 2), 1: F(-1, 2)},))


def test_lmc_rejects_bad_rows():
    with pytest.raises(LmcError):
        Lmc.build([("s", ["a"])], [("s", "s", F(1, 3))])
    with pytest.raises(LmcError):
        Lmc.build([("s", ["a"])], [("s", "x", 1)])


@given(st.integers(0, 10_000), st.sampled_from([F(0), F(1, 8), F(1, 2), F(1)]))
def test_perturbed_subset_mass_moves_at_most_half(seed, eps):
    rng = random.Random(seed)
    m = random_lmc(rng, n=rng.randint(2, 6))
    pert = random_perturbation(rng, m, eps)
    new, dist = apply_perturbation(m, pert)
    assert max(dist) <= eps
    for s in range(m.n):
        for a in all_subsets(m.n):
            assert abs(m.prob(s, a) - new.prob(s, a)) <= eps / 2
