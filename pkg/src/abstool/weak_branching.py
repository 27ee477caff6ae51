"""Branching and weak ε-bisimulation, via the stutter-free transformations M_R and M^w."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .approx_bisim import is_eps_bisimulation, is_transitive_eps_bisimulation
from .lmc_core import Lmc, LmcError, check_tolerance
from .perturbed import SearchResult, search_partitions
from .relations import Partition, Relation, SearchCapExceeded, image
from .reports import CheckReport
from .solvers import exit_distribution, until_vector

__all__ = [
    "WEAK_CAP",
    "MrModel",
    "MrRejection",
    "MwModel",
    "build_mr",
    "is_branching_eps_bisimulation",
    "is_branching_direct_oracle",
    "decide_branching_bisimilar",
    "build_mw",
    "lift_rw",
    "weak_until",
    "is_weak_eps_bisimulation",
    "greatest_weak_eps_bisimilarity",
]

ZERO = Fraction(0)
ONE = Fraction(1)
WEAK_CAP = 12


def _fresh(name: str, taken: set[str]) -> str:
    while name in taken:
        name += "'"
    taken.add(name)
    return name


@dataclass(frozen=True)
class MrModel:
    """M_R with R^b; original states keep their indices, divergence states follow."""

    lmc: Lmc
    div_states: tuple[tuple[int, tuple[int, ...]], ...]
    partition: Partition
    stay: tuple[Fraction, ...]


@dataclass(frozen=True)
class MrRejection:
    """The partition violates the all-or-nothing divergence property."""

    message: str
    block: tuple[int, ...]

    def __bool__(self) -> bool:
        return False


def build_mr(m: Lmc, p: Partition, eps: Fraction) -> MrModel | MrRejection:
    eps = check_tolerance(eps)
    stay = [ZERO] * m.n
    exits: dict[int, dict[int, Fraction]] = {}
    div: list[tuple[int, ...]] = []
    for block in p.blocks:
        if len({m.labels[x] for x in block}) != 1:
            raise LmcError(f"block [{m.names[block[0]]}] mixes labels")
        dist = exit_distribution(m, block)
        for u in block:
            exits[u] = dist[u]
            stay[u] = ONE - sum(dist[u].values(), ZERO)
        if all(stay[u] >= 1 - eps for u in block):
            div.append(block)
        elif any(stay[u] > 0 for u in block):
            bad = next(u for u in block if stay[u] > 0)
            return MrRejection(
                f"divergence dichotomy violated in block [{m.names[block[0]]}]: "
                f"Pr_{m.names[bad]}(always C) = {stay[bad]}",
                block,
            )
    taken = set(m.names)
    names = list(m.names)
    labels = list(m.labels)
    rows: list[dict[int, Fraction]] = [dict(exits[u]) for u in range(m.n)]
    div_states = []
    blocks = [list(b) for b in p.blocks]
    for block in div:
        idx = len(names)
        names.append(_fresh("__div_" + m.names[block[0]], taken))
        labels.append(m.labels[block[0]])
        rows.append({idx: ONE})
        for u in block:
            if stay[u]:
                rows[u][idx] = stay[u]
        div_states.append((idx, block))
        blocks[p.blocks.index(block)].append(idx)
    lmc = Lmc(tuple(names), tuple(labels), tuple(rows), m.init)
    return MrModel(lmc, tuple(div_states), Partition(lmc.n, tuple(map(tuple, blocks))), tuple(stay))


def is_branching_eps_bisimulation(m: Lmc, p: Partition, eps: Fraction) -> CheckReport:
    mr = build_mr(m, p, eps)
    if isinstance(mr, MrRejection):
        return CheckReport(
            False, "branching-eps-bisimulation", mr.message,
            {"block": [m.names[x] for x in mr.block]},
        )
    rep = is_transitive_eps_bisimulation(mr.lmc, mr.partition, eps)
    return CheckReport(rep.ok, "branching-eps-bisimulation", rep.message, rep.witness)


def is_branching_direct_oracle(
    m: Lmc, p: Partition, eps: Fraction, cap: int = WEAK_CAP
) -> bool:
    """Compare Pr_s([s] U A) across every block pair and every union A of blocks."""
    eps = check_tolerance(eps)
    if m.n > cap:
        raise SearchCapExceeded(f"search space too large: {m.n} states exceed the cap of {cap}")
    k = len(p.blocks)
    for block in p.blocks:
        if len({m.labels[x] for x in block}) != 1:
            return False
    for bi, block in enumerate(p.blocks):
        if len(block) < 2:
            continue
        for mask in range(1, 1 << k):
            target = [x for c in range(k) if mask >> c & 1 for x in p.blocks[c]]
            vec = until_vector(m, block, target)
            vals = [vec[u] for u in block]
            if max(vals) - min(vals) > eps:
                return False
    return True


def decide_branching_bisimilar(
    m: Lmc, s: int, t: int, eps: Fraction, cap: int | None = None, jobs: int = 1
) -> SearchResult:
    return search_partitions(m, "branching", eps, [(s, t)], cap, jobs)


@dataclass(frozen=True)
class MwModel:
    """M^w; original states keep their indices, one divergence state per label in 𝓛."""

    lmc: Lmc
    divergent_labels: tuple[frozenset[str], ...]
    div_index: dict[frozenset[str], int]
    stay: tuple[Fraction, ...]


def _label_classes(m: Lmc) -> dict[frozenset[str], tuple[int, ...]]:
    out: dict[frozenset[str], list[int]] = {}
    for s in range(m.n):
        out.setdefault(m.labels[s], []).append(s)
    return {k: tuple(v) for k, v in out.items()}


def build_mw(m: Lmc) -> MwModel:
    stay = [ZERO] * m.n
    rows: list[dict[int, Fraction]] = [{} for _ in range(m.n)]
    classes = _label_classes(m)
    for members in classes.values():
        dist = exit_distribution(m, members)
        for u in members:
            rows[u] = dict(dist[u])
            stay[u] = ONE - sum(dist[u].values(), ZERO)
    divergent = tuple(b for b, members in classes.items() if any(stay[u] for u in members))
    taken = set(m.names)
    names, labels = list(m.names), list(m.labels)
    div_index = {}
    for b in divergent:
        idx = len(names)
        names.append(_fresh("__div_" + "+".join(sorted(b)), taken))
        labels.append(b)
        rows.append({idx: ONE})
        div_index[b] = idx
        for u in classes[b]:
            if stay[u]:
                rows[u][idx] = stay[u]
    for u, row in enumerate(rows):
        if sum(row.values(), ZERO) != 1:
            raise AssertionError(f"M^w row of {names[u]} does not sum to 1")
    lmc = Lmc(tuple(names), tuple(labels), tuple(rows), m.init)
    return MwModel(lmc, divergent, div_index, tuple(stay))


def lift_rw(m: Lmc, mw: MwModel, r: Relation, eps: Fraction) -> Relation:
    """R^w on M^w; raises when it is not an ε-bisimulation there."""
    eps = check_tolerance(eps)
    pairs = set(r.pairs)
    for s in range(m.n):
        b = m.labels[s]
        if b in mw.div_index and mw.stay[s] >= 1 - eps:
            pairs.add((s, mw.div_index[b]))
    rw = Relation(mw.lmc.n, frozenset(pairs))
    rep = is_eps_bisimulation(mw.lmc, rw, eps)
    if not rep:
        raise LmcError(f"lifted relation is not an eps-bisimulation on M^w: {rep.message}")
    return rw


class _WeakOracle:
    """Cached Pr_u(L(u) U A) vectors keyed by (label, A)."""

    def __init__(self, m: Lmc) -> None:
        self.m = m
        self.classes = _label_classes(m)
        self.cache: dict[tuple[frozenset[str], frozenset[int]], list[Fraction]] = {}

    def prob(self, u: int, target: frozenset[int]) -> Fraction:
        if u in target:
            return ONE
        lab = self.m.labels[u]
        key = (lab, target)
        vec = self.cache.get(key)
        if vec is None:
            vec = until_vector(self.m, self.classes[lab], target)
            self.cache[key] = vec
        return vec[u]


def weak_until(m: Lmc, u: int, target) -> Fraction:
    """Pr_u(L(u) U A): reach ``target`` moving only through states labeled like u."""
    return _WeakOracle(m).prob(u, frozenset(target))


def _subsets(n: int):
    for size in range(1, n + 1):
        for combo in combinations(range(n), size):
            yield frozenset(combo)


def _weak_violation(
    oracle: _WeakOracle, r: Relation, s: int, t: int, eps: Fraction, subsets
):
    for a, b in ((s, t), (t, s)):
        for A in subsets:
            lhs = oracle.prob(a, A)
            if not lhs:
                continue
            rhs = oracle.prob(b, image(r, A))
            if lhs > rhs + eps:
                return a, b, A, lhs, rhs
    return None


def _weak_cap(m: Lmc, cap: int | None) -> None:
    limit = WEAK_CAP if cap is None else cap
    if m.n > limit:
        raise SearchCapExceeded(
            f"search space too large: {m.n} states exceed the weak-check cap of {limit}"
        )


def is_weak_eps_bisimulation(
    m: Lmc, r: Relation, eps: Fraction, cap: int | None = None
) -> CheckReport:
    """Brute-force over all A ⊆ S; the witness is the first violating (pair, A)."""
    eps = check_tolerance(eps)
    _weak_cap(m, cap)
    oracle = _WeakOracle(m)
    subsets = list(_subsets(m.n))
    for i, j in r.sorted_pairs():
        if m.labels[i] != m.labels[j]:
            return CheckReport(
                False, "weak-eps-bisimulation",
                f"{m.names[i]} and {m.names[j]} carry different labels",
                {"pair": [m.names[i], m.names[j]]},
            )
        bad = _weak_violation(oracle, r, i, j, eps, subsets)
        if bad is not None:
            a, b, A, lhs, rhs = bad
            return CheckReport(
                False,
                "weak-eps-bisimulation",
                f"Pr_{m.names[a]}(L U A) = {lhs} > Pr_{m.names[b]}(L U R(A)) + {eps} = {rhs + eps}",
                {
                    "pair": [m.names[a], m.names[b]],
                    "set": [m.names[x] for x in sorted(A)],
                    "lhs": lhs,
                    "rhs": rhs,
                },
            )
    return CheckReport(True, "weak-eps-bisimulation")


def greatest_weak_eps_bisimilarity(
    m: Lmc, eps: Fraction, cap: int | None = None
) -> Relation:
    """Greatest fixpoint from the equally labeled pairs, re-verified at the end."""
    eps = check_tolerance(eps)
    _weak_cap(m, cap)
    oracle = _WeakOracle(m)
    subsets = list(_subsets(m.n))
    rel = Relation(
        m.n,
        frozenset(
            (i, j) for i in range(m.n) for j in range(i + 1, m.n) if m.labels[i] == m.labels[j]
        ),
    )
    while True:
        keep = frozenset(
            (i, j) for i, j in rel.sorted_pairs()
            if _weak_violation(oracle, rel, i, j, eps, subsets) is None
        )
        if keep == rel.pairs:
            break
        rel = Relation(m.n, keep)
    rep = is_weak_eps_bisimulation(m, rel, eps, cap=m.n)
    if not rep:
        raise AssertionError(f"fixpoint not a weak eps-bisimulation: {rep.message}")
    return rel
