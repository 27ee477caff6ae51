"""Exact and approximate (ε-tolerant) bisimulation checks on a single LMC."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .lmc_core import Lmc, LmcError, check_tolerance
from .relations import Partition, Relation, components, image
from .reports import CheckReport
from .solvers import FlowNetwork, max_flow_assignment, min_cut

__all__ = [
    "PairCheck",
    "WeightFunction",
    "pair_network",
    "pair_check_eps",
    "is_eps_bisimulation",
    "greatest_eps_bisimilarity",
    "extract_weight_function",
    "is_eps_apb",
    "up_to_bisimilarity",
    "up_to_sequence",
    "is_transitive_eps_bisimulation",
    "exact_bisimilarity",
    "lifted_rows",
    "positive_gap",
]

ZERO = Fraction(0)
_SRC, _SNK = ("src",), ("snk",)


@dataclass(frozen=True)
class PairCheck:
    """Outcome of one directional check; ``subset`` is the violating A on failure."""

    ok: bool
    flow: Fraction
    subset: frozenset[int] = frozenset()
    lhs: Fraction = ZERO
    rhs: Fraction = ZERO

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class WeightFunction:
    """Δ for a pair (s, t): ``delta[s'][t']`` is a distribution over Succ(t) per s' ∈ Succ(s)."""

    s: int
    t: int
    delta: dict[int, dict[int, Fraction]]

    def marginal(self, m: Lmc) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for sp, dist in self.delta.items():
            w = m.rows[self.s][sp]
            for tp, q in dist.items():
                out[tp] = out.get(tp, ZERO) + w * q
        return {k: v for k, v in out.items() if v}

    def related_mass(self, m: Lmc, r: Relation) -> Fraction:
        return sum(
            (
                m.rows[self.s][sp] * q
                for sp, dist in self.delta.items()
                for tp, q in dist.items()
                if (sp, tp) in r
            ),
            ZERO,
        )


def pair_network(m: Lmc, r: Relation, s: int, t: int, eps: Fraction) -> FlowNetwork:
    """Bipartite network whose max flow is ≥ 1 iff P(s)(A) ≤ P(t)(R(A)) + ε for all A."""
    left = m.succ(s)
    right = m.succ(t)
    arcs: list[tuple] = [(_SRC, ("L", a), m.rows[s][a]) for a in left]
    arcs += [(("R", b), _SNK, m.rows[t][b]) for b in right]
    arcs += [(("L", a), ("R", b), None) for a in left for b in right if (a, b) in r]
    if eps:
        arcs.append((_SRC, _SNK, eps))
    nodes = (_SRC, _SNK) + tuple(("L", a) for a in left) + tuple(("R", b) for b in right)
    return FlowNetwork(nodes, tuple(arcs), _SRC, _SNK)


def pair_check_eps(m: Lmc, r: Relation, s: int, t: int, eps: Fraction) -> PairCheck:
    """Check P(s)(A) ≤ P(t)(R(A)) + ε for every A ⊆ S via one max-flow problem."""
    eps = check_tolerance(eps)
    if m.labels[s] != m.labels[t]:
        raise LmcError(f"labels of {m.names[s]} and {m.names[t]} differ")
    if s == t:
        return PairCheck(True, Fraction(1) + eps)
    value, side = min_cut(pair_network(m, r, s, t, eps))
    if value >= 1:
        return PairCheck(True, value)
    subset = frozenset(x[1] for x in side if len(x) == 2 and x[0] == "L")
    return PairCheck(False, value, subset, m.prob(s, subset), m.prob(t, image(r, subset)))


def _pair_directions(m: Lmc, r: Relation, i: int, j: int, eps: Fraction):
    for a, b in ((i, j), (j, i)):
        res = pair_check_eps(m, r, a, b, eps)
        if not res:
            return a, b, res
    return None


def is_eps_bisimulation(m: Lmc, r: Relation, eps: Fraction) -> CheckReport:
    eps = check_tolerance(eps)
    for i, j in r.sorted_pairs():
        if m.labels[i] != m.labels[j]:
            return CheckReport(
                False,
                "eps-bisimulation",
                f"{m.names[i]} and {m.names[j]} carry different labels",
                {"pair": [m.names[i], m.names[j]]},
            )
        bad = _pair_directions(m, r, i, j, eps)
        if bad is not None:
            a, b, res = bad
            return CheckReport(
                False,
                "eps-bisimulation",
                f"P({m.names[a]})(A) = {res.lhs} > P({m.names[b]})(R(A)) + {eps} = {res.rhs + eps}",
                {
                    "pair": [m.names[a], m.names[b]],
                    "set": [m.names[x] for x in sorted(res.subset)],
                    "lhs": res.lhs,
                    "rhs": res.rhs,
                },
            )
    return CheckReport(True, "eps-bisimulation")


def _refine(m: Lmc, current: Relation, candidates: Iterable[tuple[int, int]], eps: Fraction) -> Relation:
    keep = [(i, j) for i, j in candidates if _pair_directions(m, current, i, j, eps) is None]
    return Relation(m.n, frozenset(keep))


def _label_pairs(m: Lmc) -> list[tuple[int, int]]:
    return [
        (i, j) for i in range(m.n) for j in range(i + 1, m.n) if m.labels[i] == m.labels[j]
    ]


def greatest_eps_bisimilarity(m: Lmc, eps: Fraction) -> Relation:
    """~_ε as a greatest fixpoint.

    Each round checks every surviving pair against a frozen snapshot of the
    relation and drops all failures at once.
    """
    eps = check_tolerance(eps)
    rel = Relation(m.n, frozenset(_label_pairs(m)))
    while True:
        nxt = _refine(m, rel, rel.sorted_pairs(), eps)
        if nxt == rel:
            return rel
        rel = nxt


def up_to_bisimilarity(m: Lmc, eps: Fraction, n: int) -> Relation:
    """~_ε^n, with ~_ε^0 the full relation."""
    if n < 0:
        raise LmcError("n must be non-negative")
    eps = check_tolerance(eps)
    rel = Relation.full(m.n)
    for _ in range(n):
        rel = _refine(m, rel, _label_pairs(m), eps)
    return rel


def up_to_sequence(m: Lmc, eps: Fraction) -> list[Relation]:
    """[~_ε^0, ~_ε^1, ...] up to and including the first repeated element."""
    eps = check_tolerance(eps)
    seq = [Relation.full(m.n)]
    while True:
        nxt = _refine(m, seq[-1], _label_pairs(m), eps)
        seq.append(nxt)
        if nxt == seq[-2]:
            return seq


def extract_weight_function(
    m: Lmc, r: Relation, s: int, t: int, eps: Fraction
) -> WeightFunction | None:
    """Weight function built from a max flow, or None when the pair check fails."""
    eps = check_tolerance(eps)
    if m.labels[s] != m.labels[t]:
        return None
    if s == t:
        return WeightFunction(s, t, {a: {a: Fraction(1)} for a in m.succ(s)})
    value, flows = max_flow_assignment(pair_network(m, r, s, t, eps))
    if value < 1:
        return None
    left, right = m.succ(s), m.succ(t)
    joint = {a: {} for a in left}
    out_res = {a: m.rows[s][a] for a in left}
    in_res = {b: m.rows[t][b] for b in right}
    for a in left:
        for (_, b), f in flows[("L", a)].items():
            f = Fraction(f)
            if f:
                joint[a][b] = f
                out_res[a] -= f
                in_res[b] -= f
    # north-west corner fill of the unmatched mass
    cols = [b for b in right if in_res[b]]
    ci = 0
    for a in left:
        need = out_res[a]
        while need:
            b = cols[ci]
            take = min(need, in_res[b])
            joint[a][b] = joint[a].get(b, ZERO) + take
            need -= take
            in_res[b] -= take
            if not in_res[b]:
                ci += 1
    delta = {a: {b: q / m.rows[s][a] for b, q in joint[a].items() if q} for a in left}
    wf = WeightFunction(s, t, delta)
    if any(sum(d.values(), ZERO) != 1 for d in delta.values()):
        raise AssertionError("weight function rows are not distributions")
    if wf.marginal(m) != dict(m.rows[t]):
        raise AssertionError("weight function marginal differs from P(t)")
    if wf.related_mass(m, r) < 1 - eps:
        raise AssertionError("weight function related mass below 1 - eps")
    return wf


def positive_gap(
    u_row: dict[int, Fraction], v_row: dict[int, Fraction]
) -> tuple[Fraction, frozenset[int]]:
    """Σ_C max(u(C) − v(C), 0) over keys C, with the keys where u exceeds v."""
    keys = [c for c in u_row if u_row[c] > v_row.get(c, ZERO)]
    gap = sum((u_row[c] - v_row.get(c, ZERO) for c in keys), ZERO)
    return gap, frozenset(keys)


def lifted_rows(m: Lmc, p: Partition) -> list[dict[int, Fraction]]:
    """Each state's row summed per block (keys are block indices)."""
    where = p.block_index()
    out = []
    for s in range(m.n):
        row: dict[int, Fraction] = {}
        for j, q in m.rows[s].items():
            row[where[j]] = row.get(where[j], ZERO) + q
        out.append(row)
    return out


def is_eps_apb(m: Lmc, r: Relation, eps: Fraction) -> CheckReport:
    """Check every pair against all R-closed sets, i.e. unions of components."""
    eps = check_tolerance(eps)
    comp = components(r)
    lifted = lifted_rows(m, comp)
    for i, j in r.sorted_pairs():
        if m.labels[i] != m.labels[j]:
            return CheckReport(
                False, "eps-apb", f"{m.names[i]} and {m.names[j]} carry different labels",
                {"pair": [m.names[i], m.names[j]]},
            )
        gap, keys = positive_gap(lifted[i], lifted[j])
        if gap > eps:
            a, b = i, j
        else:
            gap, keys = positive_gap(lifted[j], lifted[i])
            a, b = j, i
        if gap > eps:
            members = sorted(x for c in keys for x in comp.blocks[c])
            return CheckReport(
                False,
                "eps-apb",
                f"|P({m.names[a]})(A) - P({m.names[b]})(A)| = {gap} > {eps}",
                {
                    "pair": [m.names[a], m.names[b]],
                    "set": [m.names[x] for x in members],
                    "lhs": m.prob(a, members),
                    "rhs": m.prob(b, members),
                },
            )
    return CheckReport(True, "eps-apb")


def is_transitive_eps_bisimulation(m: Lmc, p: Partition, eps: Fraction) -> CheckReport:
    eps = check_tolerance(eps)
    if p.n != m.n:
        raise LmcError("partition and model sizes differ")
    lifted = lifted_rows(m, p)
    for block in p.blocks:
        labs = {m.labels[x] for x in block}
        if len(labs) != 1:
            return CheckReport(
                False, "transitive-eps-bisimulation",
                f"block [{m.names[block[0]]}] mixes labels",
                {"block": [m.names[x] for x in block]},
            )
        for a_i, u in enumerate(block):
            for v in block[a_i + 1:]:
                gap, keys = positive_gap(lifted[u], lifted[v])
                if gap > eps:
                    members = sorted(x for c in keys for x in p.blocks[c])
                    return CheckReport(
                        False,
                        "transitive-eps-bisimulation",
                        f"P({m.names[u]})(A) - P({m.names[v]})(A) = {gap} > {eps}",
                        {
                            "pair": [m.names[u], m.names[v]],
                            "set": [m.names[x] for x in members],
                            "lhs": m.prob(u, members),
                            "rhs": m.prob(v, members),
                        },
                    )
    return CheckReport(True, "transitive-eps-bisimulation")


def exact_bisimilarity(m: Lmc) -> Partition:
    """Coarsest probabilistic bisimulation by signature refinement."""
    label_ids: dict[frozenset[str], int] = {}
    where = [label_ids.setdefault(m.labels[s], len(label_ids)) for s in range(m.n)]
    while True:
        sigs: dict[tuple, int] = {}
        nxt = []
        for s in range(m.n):
            row: dict[int, Fraction] = {}
            for j, q in m.rows[s].items():
                row[where[j]] = row.get(where[j], ZERO) + q
            key = (where[s], tuple(sorted(row.items())))
            nxt.append(sigs.setdefault(key, len(sigs)))
        if len(sigs) == len(set(where)):
            break
        where = nxt
    groups: dict[int, list[int]] = {}
    for s, b in enumerate(where):
        groups.setdefault(b, []).append(s)
    return Partition(m.n, tuple(tuple(g) for g in groups.values()))
