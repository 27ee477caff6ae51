from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from abstool import generators as g
from abstool.approx_bisim import (
    exact_bisimilarity,
    greatest_eps_bisimilarity,
    is_transitive_eps_bisimulation,
    lifted_rows,
)
from abstool.lmc_core import LmcError, apply_perturbation, direct_sum
from abstool.perturbed import (
    CentroidCertificate,
    centroid,
    certificate_json,
    decide_perturbed_bisimilar,
    decide_perturbed_states,
    decide_transitive_eps_bisimilar,
    is_eps_perturbed_bisimulation,
    search_partitions,
    synthesize_perturbation,
)
from abstool.relations import Partition, SearchCapExceeded
from modelgen import lumpable_lmc, random_label_partition, random_lmc

F = Fraction


def part(m, blocks) -> Partition:
    return Partition.from_blocks(m.n, [[m.index(x) for x in b] for b in blocks], fill=True)


def l1(a, b):
    return sum(abs(x - y) for x, y in zip(a, b))


def test_centroid_single_row():
    row = (F(1, 3), F(2, 3))
    assert centroid([row], F(0)) == row


def test_centroid_opposite_corners():
    rows = [(F(1), F(0)), (F(0), F(1))]
    assert centroid(rows, F(1, 2)) is None
    assert centroid(rows, F(1)) == (F(1, 2), F(1, 2))


def test_centroid_rejects_malformed_rows():
    with pytest.raises(LmcError):
        centroid([(F(1, 2), F(1, 3))], F(0))
    with pytest.raises(LmcError):
        centroid([], F(0))


def test_centroid_u_block_of_finer_example():
    eps = F(1, 8)
    m = g.strictly_finer(eps)
    p = part(m, [["u1", "u2", "u3"]])
    k = len(p.blocks)
    lifted = [tuple(r.get(c, F(0)) for c in range(k)) for r in lifted_rows(m, p)]
    rows = [lifted[m.index(u)] for u in ("u1", "u2", "u3")]
    # u1 and u2 sit 2 eps apart, so only their midpoint is within eps of both;
    # that midpoint is 2 eps from u3
    assert centroid(rows, eps) is None
    assert all(l1(rows[2], r) <= 2 * eps for r in rows)
    mu = centroid(rows, 2 * eps)
    assert mu is not None and all(l1(mu, r) <= 2 * eps for r in rows)


@given(st.integers(0, 10_000))
def test_centroid_lp_against_grid(seed):
    rng = random.Random(seed)
    den = 4
    grid = [(F(a, den), F(b, den), F(den - a - b, den)) for a in range(den + 1) for b in range(den + 1 - a)]
    rows = [rng.choice(grid) for _ in range(rng.randint(1, 3))]
    eps = F(rng.randint(0, 8), 4)
    eps = min(eps, F(1))
    mu = centroid(rows, eps)
    on_grid = any(all(l1(c, r) <= eps for r in rows) for c in grid)
    if on_grid:
        assert mu is not None
    if mu is not None:
        assert sum(mu) == 1 and all(l1(mu, r) <= eps for r in rows)


def test_exact_partition_is_perturbed_at_zero():
    rng = random.Random(3)
    m, p = lumpable_lmc(rng, n=6)
    rep = is_eps_perturbed_bisimulation(m, p, F(0))
    assert rep
    assert set(rep.certificate.distances) == {0}


def test_finer_example_separates_checks():
    eps = F(1, 8)
    m = g.strictly_finer(eps)
    p = part(m, [["s", "t"], ["u1", "u2", "u3"]])
    assert is_transitive_eps_bisimulation(m, p, eps)
    rep = is_eps_perturbed_bisimulation(m, p, eps)
    assert not rep and "no centroid" in rep.message
    assert rep.witness["block"] == ["u1", "u2", "u3"]


def test_divergent_example_is_not_perturbed_on_raw_model():
    eps = F(1, 8)
    m = g.mr_example(eps, F(1, 4))
    p = part(m, [["s", "t", "s1", "t1"], ["p", "q"], ["x"]])
    assert not is_eps_perturbed_bisimulation(m, p, eps)


def test_synthesis_zero_deviation_is_identity():
    rng = random.Random(11)
    m, p = lumpable_lmc(rng, n=5)
    cert = is_eps_perturbed_bisimulation(m, p, F(0)).certificate
    pert = synthesize_perturbation(m, cert)
    assert pert.rows == m.rows


def test_synthesis_rejects_stale_certificate():
    eps = F(1, 8)
    m = g.nonunique(eps)
    p = part(m, [["s", "t"]])
    cert = is_eps_perturbed_bisimulation(m, p, eps).certificate
    stale = CentroidCertificate(p, F(0), cert.centroids, cert.distances)
    with pytest.raises(LmcError, match="certificate invalid"):
        synthesize_perturbation(m, stale)


def test_bisimilar_models_synthesis():
    eps = F(1, 8)
    ms, mt, _ = g.ms_mt_q(eps)
    res = decide_perturbed_bisimilar(ms, mt, eps, cap=16)
    assert res
    total = direct_sum(ms, mt)
    new, dist = apply_perturbation(total, res.perturbation)
    assert max(dist) <= eps
    assert is_transitive_eps_bisimulation(new, res.partition, F(0))
    assert exact_bisimilarity(new).same_block(total.init, ms.n + mt.init)


def test_identical_models_are_perturbed_bisimilar():
    m = g.nonunique(F(1, 8))
    for eps in (F(0), F(1, 2)):
        res = decide_perturbed_bisimilar(m, m, eps)
        assert res and res.partition.same_block(m.init, m.n + m.init)


def test_transitive_decision_examples():
    eps = F(1, 8)
    ms, mt, q = g.ms_mt_q(eps)
    assert decide_transitive_eps_bisimilar(ms, mt, eps, cap=16)
    assert not decide_transitive_eps_bisimilar(mt, q, eps, cap=16)
    m = g.nonunique(eps)
    assert decide_transitive_eps_bisimilar(m.with_init("s"), m.with_init("u"), F(1), cap=16)


def test_search_cap_is_explicit():
    ms, mt, _ = g.ms_mt_q(F(1, 8))
    with pytest.raises(SearchCapExceeded):
        decide_perturbed_bisimilar(ms, mt, F(1, 8), cap=8)


def test_require_both_halves_only_prunes():
    eps = F(1, 8)
    m = g.nonunique(eps)
    a, b = m.with_init("s"), m.with_init("t")
    full = decide_perturbed_bisimilar(a, b, eps)
    pruned = decide_perturbed_bisimilar(a, b, eps, require_both_halves=True)
    assert bool(full) == bool(pruned)
    assert pruned.examined <= full.examined
    split = a.n
    assert all(blk[0] < split <= blk[-1] for blk in pruned.partition.blocks)


def test_parallel_search_reports_same_partition():
    eps = F(1, 8)
    ms, mt, _ = g.ms_mt_q(eps)
    total = direct_sum(ms, mt)
    link = [(total.init, ms.n + mt.init)]
    serial = search_partitions(total, "perturbed", eps, link, cap=16)
    parallel = search_partitions(total, "perturbed", eps, link, cap=16, jobs=2)
    assert serial.partition == parallel.partition
    assert serial.examined == parallel.examined
    assert certificate_json(total, serial) == certificate_json(total, parallel)


def test_certificate_json_uses_strings():
    eps = F(1, 8)
    m = g.nonunique(eps)
    res = decide_perturbed_states(m, m.index("s"), m.index("t"), eps)
    doc = certificate_json(m, res)
    assert doc["verdict"] is True
    assert doc["blocks"][0] == ["s", "t"]
    assert all(isinstance(v, str) for v in doc["l1"].values())
    assert not certificate_json(m, decide_perturbed_states(m, 0, 2, eps))["verdict"]


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([F(0), F(1, 8), F(1, 4)]))
def test_perturbed_implies_transitive_and_eps(seed, eps):
    rng = random.Random(seed)
    m = random_lmc(rng, n=rng.randint(2, 6))
    s, t = rng.sample(range(m.n), 2)
    if m.labels[s] != m.labels[t]:
        return
    res = decide_perturbed_states(m, s, t, eps)
    if res:
        assert is_transitive_eps_bisimulation(m, res.partition, eps)
        assert (s, t) in greatest_eps_bisimilarity(m, eps)
        new, dist = apply_perturbation(m, res.perturbation)
        assert max(dist) <= eps
        assert is_transitive_eps_bisimulation(new, res.partition, F(0))


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_zero_tolerance_is_exact_bisimilarity(seed):
    rng = random.Random(seed)
    m = random_lmc(rng, n=rng.randint(2, 6))
    exact = exact_bisimilarity(m)
    for s in range(m.n):
        for t in range(s + 1, m.n):
            if m.labels[s] == m.labels[t]:
                assert bool(decide_perturbed_states(m, s, t, F(0))) == exact.same_block(s, t)


@given(st.integers(0, 10_000), st.sampled_from([F(0), F(1, 8), F(1, 2)]))
def test_synthesis_round_trip_on_random_partitions(seed, eps):
    rng = random.Random(seed)
    m = random_lmc(rng, n=rng.randint(2, 6))
    p = random_label_partition(rng, m)
    rep = is_eps_perturbed_bisimulation(m, p, eps)
    if rep:
        new, dist = apply_perturbation(m, synthesize_perturbation(m, rep.certificate))
        assert max(dist) <= eps
        assert is_transitive_eps_bisimulation(new, p, F(0))
