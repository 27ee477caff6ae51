"""Parameterized example chains, the SubsetSum reduction, and the fair-coin uniform sampler."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .approx_bisim import exact_bisimilarity
from .lmc_core import Lmc, LmcError, check_tolerance, quotient

__all__ = [
    "SubsetSumInstance",
    "KnuthYao",
    "FAMILIES",
    "gen",
    "knuth_yao_uniform",
    "chain",
    "apb",
    "tight_bounded",
    "unbounded_cex",
    "tight_unbounded",
    "nonunique",
    "ms_mt_q",
    "strictly_finer",
    "graph_iso_family",
    "mn_nn_2",
    "perturbation_gap_family",
    "subsetsum",
    "weak_branching_incomparable",
    "eps_vs_weak_branching",
    "stutter_three",
    "mr_example",
]

F = Fraction
HALF = F(1, 2)


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise LmcError(msg)


def _pos_int(n, name: str = "n", least: int = 1) -> int:
    if int(n) != n or n < least:
        raise LmcError(f"{name} must be an integer ≥ {least}, got {n}")
    return int(n)


# ------------------------------------------------------------- Knuth-Yao


@dataclass(frozen=True)
class KnuthYao:
    """Fair-coin sampler; ``exits[i]`` is reached with probability 1/n."""

    lmc: Lmc
    root: int
    exits: tuple[int, ...]


def _ky_transitions(n: int, prefix: str, exit_names: list[str]):
    """Inner state names and arcs of the loop-back sampler for {1..n}.

    Inner state (v, c) holds a uniform value c in [0, v).  A flip doubles
    v; once 2v ≥ n, values below n exit and the rest fall back to
    (2v − n, value − n).
    """
    if n == 1:
        name = f"{prefix}0"
        return [name], [(name, exit_names[0], F(1))]
    order: list[tuple[int, int]] = [(1, 0)]
    index = {(1, 0): 0}
    arcs = []
    k = 0
    while k < len(order):
        v, c = order[k]
        for bit in (0, 1):
            w, val = 2 * v, 2 * c + bit
            if w >= n:
                if val < n:
                    dst = exit_names[val]
                else:
                    nxt = (w - n, val - n)
                    if nxt not in index:
                        index[nxt] = len(order)
                        order.append(nxt)
                    dst = f"{prefix}{index[nxt]}"
            else:
                nxt = (w, val)
                if nxt not in index:
                    index[nxt] = len(order)
                    order.append(nxt)
                dst = f"{prefix}{index[nxt]}"
            arcs.append((f"{prefix}{k}", dst, HALF))
        k += 1
    return [f"{prefix}{i}" for i in range(len(order))], arcs


def knuth_yao_uniform(n: int, prefix: str = "d") -> KnuthYao:
    """Sampler fragment with absorbing exits ``e1..en`` (all labels empty)."""
    n = _pos_int(n)
    exits = [f"e{i}" for i in range(1, n + 1)]
    inner, arcs = _ky_transitions(n, prefix, exits)
    states = [(x, ()) for x in inner] + [(e, ()) for e in exits]
    arcs = arcs + [(e, e, 1) for e in exits]
    lmc = Lmc.build(states, arcs, inner[0])
    return KnuthYao(lmc, 0, tuple(lmc.index(e) for e in exits))


# ----------------------------------------------------- named examples


def chain(n: int) -> Lmc:
    """s_0 → s_1 → … → s_n with leaks i/n from s_i to the absorbing x; ε = 1/n."""
    n = _pos_int(n)
    eps = F(1, n)
    states = [(f"s{i}", ()) for i in range(n + 1)] + [("x", ("a",))]
    arcs = [("s0", "s1", 1)]
    for i in range(1, n):
        arcs.append((f"s{i}", f"s{i + 1}", 1 - i * eps))
        arcs.append((f"s{i}", "x", i * eps))
    arcs += [(f"s{n}", "x", 1), ("x", "x", 1)]
    return Lmc.build(states, arcs, "s0")


def apb(n: int) -> Lmc:
    """s → u_0 and t → u_n, with u_i reaching y with i/n; ε = 1/n."""
    n = _pos_int(n)
    eps = F(1, n)
    states = [("s", ("a",)), ("t", ("a",))]
    states += [(f"u{i}", ("a",)) for i in range(n + 1)]
    states += [("x", ("b",)), ("y", ("c",))]
    arcs = [("s", "u0", 1), ("t", f"u{n}", 1)]
    for i in range(n + 1):
        arcs.append((f"u{i}", "x", 1 - i * eps))
        arcs.append((f"u{i}", "y", i * eps))
    arcs += [("x", "x", 1), ("y", "y", 1)]
    return Lmc.build(states, arcs, "s")


def tight_bounded(n: int, eps: Fraction) -> Lmc:
    """Sure chain s_0..s_n → G1 beside a leaky chain t_0..t_n → G2 leaking into F."""
    n = _pos_int(n, least=0)
    eps = check_tolerance(eps)
    states = [(f"s{i}", (f"a{i}",)) for i in range(n + 1)] + [("G1", ("g",))]
    states += [(f"t{i}", (f"a{i}",)) for i in range(n + 1)] + [("F", ("f",)), ("G2", ("g",))]
    arcs = [(f"s{i}", f"s{i + 1}", 1) for i in range(n)] + [(f"s{n}", "G1", 1), ("G1", "G1", 1)]
    for i in range(n + 1):
        nxt = f"t{i + 1}" if i < n else "G2"
        arcs += [(f"t{i}", nxt, 1 - eps), (f"t{i}", "F", eps)]
    arcs += [("F", "F", 1), ("G2", "G2", 1)]
    return Lmc.build(states, arcs, "s0")


def unbounded_cex(eps: Fraction) -> Lmc:
    """Three a-states that are pairwise ε-bisimilar yet reach g with 1/2, 0, 1."""
    eps = check_tolerance(eps)
    _need(eps > 0, "unbounded_cex requires ε > 0")
    states = [("s0", ("a",)), ("s1", ("a",)), ("s2", ("a",)), ("s3", ("g",))]
    arcs = [
        ("s0", "s1", HALF), ("s0", "s2", HALF), ("s1", "s1", 1),
        ("s2", "s2", 1 - eps), ("s2", "s3", eps), ("s3", "s3", 1),
    ]
    return Lmc.build(states, arcs, "s0")


def tight_unbounded(p: Fraction, eps: Fraction) -> Lmc:
    """Two geometric chains leaving with p, split evenly (s) or skewed by ε (t)."""
    p = check_tolerance(p, "p")
    eps = check_tolerance(eps)
    _need(0 < p and eps < p / 2, "tight_unbounded requires 0 < p and ε < p/2")
    states = [
        ("s", ("a",)), ("r", ("f",)), ("q", ("g",)),
        ("t", ("a",)), ("r'", ("f",)), ("q'", ("g",)),
    ]
    arcs = [
        ("s", "s", 1 - p), ("s", "r", p / 2), ("s", "q", p / 2),
        ("t", "t", 1 - p), ("t", "r'", p / 2 + eps), ("t", "q'", p / 2 - eps),
        ("r", "r", 1), ("q", "q", 1), ("r'", "r'", 1), ("q'", "q'", 1),
    ]
    return Lmc.build(states, arcs, "s")


def nonunique(eps: Fraction) -> Lmc:
    """Three states splitting between x and y at 1/2 − ε, 1/2, 1/2 + ε."""
    eps = check_tolerance(eps)
    _need(eps <= HALF, "nonunique requires ε ≤ 1/2")
    states = [("s", ()), ("t", ()), ("u", ()), ("x", ("a",)), ("y", ("b",))]
    arcs = [
        ("s", "x", HALF - eps), ("s", "y", HALF + eps),
        ("t", "x", HALF), ("t", "y", HALF),
        ("u", "x", HALF + eps), ("u", "y", HALF - eps),
        ("x", "x", 1), ("y", "y", 1),
    ]
    return Lmc.build(states, arcs, "t")


def _ms_mt(eps: Fraction) -> Lmc:
    states = [("s", ("a",)), ("t", ("a",))]
    states += [(f"u{i}", ("b",)) for i in range(1, 5)] + [("v", ()), ("w", ("c",))]
    q = F(1, 4)
    arcs = [("s", f"u{i}", q) for i in range(1, 5)]
    arcs += [("t", "u1", HALF), ("t", "u4", HALF)]
    arcs += [("u1", "v", HALF - 2 * eps), ("u1", "w", HALF + 2 * eps)]
    for u in ("u2", "u3"):
        arcs += [(u, "v", HALF - eps), (u, "w", HALF + eps)]
    arcs += [("u4", "v", HALF), ("u4", "w", HALF), ("v", "v", 1), ("w", "w", 1)]
    return Lmc.build(states, arcs, "s")


def ms_mt_q(eps: Fraction) -> tuple[Lmc, Lmc, Lmc]:
    """(M_s, M_t, Q): one chain started in s or in t, and M_s modulo bisimilarity."""
    eps = check_tolerance(eps)
    _need(eps <= F(1, 4), "ms_mt_q requires ε ≤ 1/4")
    ms = _ms_mt(eps)
    mt = ms.with_init("t")
    q = quotient(ms, exact_bisimilarity(ms))
    return ms, mt, q


def strictly_finer(eps: Fraction) -> Lmc:
    """s splits over u1, u2 while t goes to u3; the u's spread over x, y, z."""
    eps = check_tolerance(eps)
    _need(eps <= F(1, 3), "strictly_finer requires ε ≤ 1/3")
    third = F(1, 3)
    states = [("s", ("a",)), ("t", ("a",))]
    states += [(f"u{i}", ("b",)) for i in (1, 2, 3)]
    states += [("x", ()), ("y", ("a",)), ("z", ("b",))]
    arcs = [
        ("s", "u1", HALF), ("s", "u2", HALF), ("t", "u3", 1),
        ("u1", "x", third - eps), ("u1", "y", third + eps), ("u1", "z", third),
        ("u2", "x", third - eps), ("u2", "y", third), ("u2", "z", third + eps),
        ("u3", "x", third), ("u3", "y", third), ("u3", "z", third),
        ("x", "x", 1), ("y", "y", 1), ("z", "z", 1),
    ]
    return Lmc.build(states, arcs, "s")


def graph_iso_family(n: int, eps: Fraction) -> tuple[Lmc, Lmc]:
    """M_n and N_n: same shape, with N_n's small branch moved to the first successor."""
    n = _pos_int(n)
    eps = check_tolerance(eps)
    bound = F(1, n * (n + 1) ** 2)
    _need(0 < eps <= bound, f"graph_iso_family requires ε ∈ (0, {bound}]")
    big, small = F(n + 2, (n + 1) ** 2), F(1, (n + 1) ** 2)
    ms = [("s", ("a",))] + [(f"s{i}", ("b",)) for i in range(1, n + 2)] + [("x", ("c",))]
    ma = [("s", f"s{i}", big) for i in range(1, n + 1)] + [("s", f"s{n + 1}", small)]
    ns = [("t", ("a",))] + [(f"t{i}", ("b",)) for i in range(1, n + 2)] + [("y", ("c",))]
    na = [("t", "t1", small)] + [("t", f"t{i}", big) for i in range(2, n + 2)]
    for i in range(1, n + 2):
        px = HALF + eps * (n - 2 * i + 1)
        py = HALF + eps * (n - 2 * i + 2)
        ma += [(f"s{i}", "x", px), (f"s{i}", f"s{i}", 1 - px)]
        na += [(f"t{i}", "y", py), (f"t{i}", f"t{i}", 1 - py)]
    ma.append(("x", "x", 1))
    na.append(("y", "y", 1))
    return Lmc.build(ms, ma, "s"), Lmc.build(ns, na, "t")


def mn_nn_2(eps: Fraction = F(1, 18)) -> tuple[Lmc, Lmc]:
    return graph_iso_family(2, eps)


def perturbation_gap_family(n: int, eps: Fraction) -> tuple[Lmc, Lmc]:
    """Uniform choice among n gadgets; ε-bisimilar but far from a common quotient."""
    n = _pos_int(n)
    eps = check_tolerance(eps)
    _need(eps <= F(1, 4 * n), f"perturbation_gap_family requires ε ≤ 1/(4n) = {F(1, 4 * n)}")
    m_inner, m_arcs = _ky_transitions(n, "dm", [f"a{i}" for i in range(1, n + 1)])
    ms = [(x, ()) for x in m_inner] + [(f"a{i}", (f"l{i}",)) for i in range(1, n + 1)]
    ms += [(f"s{i}", ("a",)) for i in range(1, n + 2)] + [("x", ("b",))]
    for i in range(1, n + 1):
        m_arcs += [(f"a{i}", f"s{i}", HALF), (f"a{i}", f"s{i + 1}", HALF)]
    for i in range(1, n + 2):
        stay = HALF + 2 * (i - 1) * eps
        m_arcs += [(f"s{i}", f"s{i}", stay), (f"s{i}", "x", 1 - stay)]
    m_arcs.append(("x", "x", 1))

    n_inner, n_arcs = _ky_transitions(n, "dn", [f"b{i}" for i in range(1, n + 1)])
    ns = [(x, ()) for x in n_inner] + [(f"b{i}", (f"l{i}",)) for i in range(1, n + 1)]
    ns += [(f"t{i}", ("a",)) for i in range(1, n + 1)] + [("y", ("b",))]
    for i in range(1, n + 1):
        stay = HALF + (2 * i - 1) * eps
        n_arcs += [(f"b{i}", f"t{i}", 1), (f"t{i}", f"t{i}", stay), (f"t{i}", "y", 1 - stay)]
    n_arcs.append(("y", "y", 1))
    return Lmc.build(ms, m_arcs, m_inner[0]), Lmc.build(ns, n_arcs, n_inner[0])


@dataclass(frozen=True)
class SubsetSumInstance:
    values: tuple[int, ...]
    target: int

    def __post_init__(self) -> None:
        if not self.values or any(int(v) != v or v <= 0 for v in self.values):
            raise LmcError("SubsetSum values must be a non-empty list of positive integers")
        if int(self.target) != self.target or self.target <= 0:
            raise LmcError("SubsetSum target must be a positive integer")
        if self.target > self.total:
            raise LmcError(f"SubsetSum target {self.target} exceeds the total {self.total}")

    @property
    def total(self) -> int:
        return sum(self.values)

    @property
    def eps(self) -> Fraction:
        return F(1, 2 * self.total)

    def solvable(self) -> bool:
        """Exact subset-sum by the reachable-sums set."""
        sums = {0}
        for v in self.values:
            sums |= {x + v for x in sums}
        return self.target in sums


def subsetsum(values, target: int) -> tuple[Lmc, Lmc, Fraction]:
    """(M, N, ε) with M ≃_ε N iff some subset of ``values`` sums to ``target``."""
    inst = SubsetSumInstance(tuple(values), target)
    total, eps = inst.total, inst.eps
    ms = [("s", ("a",))] + [(f"s{i}", ("a",)) for i in range(1, len(inst.values) + 1)]
    ms += [("s_a", ("a",)), ("s_b", ("b",))]
    ma = [("s", f"s{i}", F(p, total)) for i, p in enumerate(inst.values, start=1)]
    for i in range(1, len(inst.values) + 1):
        ma += [(f"s{i}", "s_a", HALF), (f"s{i}", "s_b", HALF)]
    ma += [("s_a", "s_a", 1), ("s_b", "s_b", 1)]
    ns = [("t", ("a",)), ("t_y", ("a",)), ("t_n", ("a",)), ("t_a", ("a",)), ("t_b", ("b",))]
    yes = F(inst.target, total)
    na = [("t", "t_y", yes), ("t", "t_n", 1 - yes)]
    na += [("t_y", "t_a", HALF - eps), ("t_y", "t_b", HALF + eps)]
    na += [("t_n", "t_b", HALF - eps), ("t_n", "t_a", HALF + eps)]
    na += [("t_a", "t_a", 1), ("t_b", "t_b", 1)]
    return Lmc.build(ms, ma, "s"), Lmc.build(ns, na, "t"), eps


def weak_branching_incomparable(eps: Fraction) -> tuple[Lmc, Lmc]:
    """(left, right): branching-but-not-weak and weak-but-not-branching pairs (s, t)."""
    eps = check_tolerance(eps)
    _need(0 < eps < F(1, 4), "weak_branching_incomparable requires 0 < ε < 1/4")
    q = F(1, 4)
    left = Lmc.build(
        [("s", ("a",)), ("s1", ("a",)), ("t", ("a",)), ("t1", ("a",)), ("x", ()), ("y", ("b",))],
        [
            ("s", "x", HALF), ("s", "s1", HALF), ("s1", "x", q), ("s1", "y", 3 * q),
            ("t", "x", HALF + eps), ("t", "t1", HALF - eps),
            ("t1", "y", 3 * q - eps), ("t1", "x", q + eps),
            ("x", "x", 1), ("y", "y", 1),
        ],
        "s",
    )
    right = Lmc.build(
        [("s", ("a",)), ("t", ("a",)), ("u", ("a",)), ("v", ("a",)), ("w", ("a",)),
         ("x", ()), ("y", ("b",))],
        [
            ("s", "u", HALF), ("s", "v", HALF), ("t", "v", HALF), ("t", "w", HALF),
            ("u", "x", HALF + eps), ("u", "y", HALF - eps),
            ("w", "y", HALF + eps), ("w", "x", HALF - eps),
            ("v", "x", HALF), ("v", "y", HALF),
            ("x", "x", 1), ("y", "y", 1),
        ],
        "s",
    )
    return left, right


def eps_vs_weak_branching(eps1: Fraction, eps2: Fraction, eps: Fraction) -> tuple[Lmc, Lmc]:
    """(left, right): ε-bisimilar pairs separated by the stutter-insensitive notions."""
    eps1, eps2, eps = check_tolerance(eps1, "eps1"), check_tolerance(eps2, "eps2"), check_tolerance(eps)
    _need(eps1 != eps2 and 0 < eps1 + eps2 < 1, "requires ε1 ≠ ε2 and 0 < ε1 + ε2 < 1")
    _need(0 < eps < 1, "requires 0 < ε < 1")
    left = Lmc.build(
        [("s", ("a",)), ("t", ("a",)), ("x1", ("b",)), ("x2", ())],
        [
            ("s", "x1", eps1), ("s", "x2", eps2), ("s", "s", 1 - eps1 - eps2),
            ("t", "x1", eps2), ("t", "x2", eps1), ("t", "t", 1 - eps1 - eps2),
            ("x1", "x1", 1), ("x2", "x2", 1),
        ],
        "s",
    )
    right = Lmc.build(
        [("s", ("a",)), ("s1", ("a",)), ("t", ("a",)), ("t1", ("a",)), ("x", ("b",)), ("y", ())],
        [
            ("s", "s1", 1 - eps), ("s", "s", eps / 2), ("s", "y", eps / 2),
            ("s1", "x", 1 - eps), ("s1", "s1", eps / 2), ("s1", "y", eps / 2),
            ("t", "t1", 1), ("t1", "x", 1),
            ("x", "x", 1), ("y", "y", 1),
        ],
        "s",
    )
    return left, right


def stutter_three() -> Lmc:
    """s → t → x: exact stutter equivalence of s and t without any ε-bisimulation."""
    return Lmc.build(
        [("s", ("a",)), ("t", ("a",)), ("x", ("b",))],
        [("s", "t", 1), ("t", "x", 1), ("x", "x", 1)],
        "s",
    )


def mr_example(eps: Fraction, delta: Fraction) -> Lmc:
    """Chain whose {s, t, s1, t1} class diverges while {p, q} only leaks."""
    eps = check_tolerance(eps)
    delta = check_tolerance(delta, "delta")
    _need(0 < eps < 1 - 2 * delta, "mr_example requires 0 < ε < 1 − 2δ")
    _need(delta > 0, "mr_example requires δ > 0")
    return Lmc.build(
        [("s", ("a",)), ("t", ("a",)), ("s1", ("a",)), ("t1", ("a",)),
         ("p", ()), ("q", ()), ("x", ("b",))],
        [
            ("s", "s1", 1 - eps), ("s", "x", eps), ("s1", "s1", 1), ("x", "x", 1),
            ("t", "t1", 1), ("t1", "s1", 1 - eps / 2), ("t1", "x", eps / 2),
            ("p", "p", 1 - 2 * delta), ("p", "s", delta), ("p", "x", delta),
            ("q", "x", HALF - eps), ("q", "t", HALF + eps),
        ],
        "s",
    )


@dataclass(frozen=True)
class Family:
    build: Callable
    params: tuple[str, ...]
    outputs: tuple[str, ...] = ()


FAMILIES: dict[str, Family] = {
    "chain": Family(chain, ("n",)),
    "apb": Family(apb, ("n",)),
    "tight_bounded": Family(tight_bounded, ("n", "eps")),
    "unbounded_cex": Family(unbounded_cex, ("eps",)),
    "tight_unbounded": Family(tight_unbounded, ("p", "eps")),
    "nonunique": Family(nonunique, ("eps",)),
    "ms_mt_q": Family(ms_mt_q, ("eps",), ("Ms", "Mt", "Q")),
    "strictly_finer": Family(strictly_finer, ("eps",)),
    "graph_iso_family": Family(graph_iso_family, ("n", "eps"), ("M", "N")),
    "mn_nn_2": Family(mn_nn_2, ("eps",), ("M", "N")),
    "perturbation_gap_family": Family(perturbation_gap_family, ("n", "eps"), ("M", "N")),
    "subsetsum": Family(lambda values, target: subsetsum(values, target)[:2], ("set", "target"), ("M", "N")),
    "weak_branching_incomparable": Family(weak_branching_incomparable, ("eps",), ("left", "right")),
    "eps_vs_weak_branching": Family(eps_vs_weak_branching, ("eps1", "eps2", "eps"), ("left", "right")),
    "stutter_three": Family(stutter_three, ()),
    "mr_example": Family(mr_example, ("eps", "delta")),
    "knuth_yao": Family(lambda n: knuth_yao_uniform(n).lmc, ("n",)),
}


def gen(name: str, **params):
    """Build a family by name; returns one Lmc or a tuple for paired families."""
    fam = FAMILIES.get(name)
    if fam is None:
        raise LmcError(f"unknown family {name!r}; known: {', '.join(sorted(FAMILIES))}")
    missing = [p for p in fam.params if params.get(p) is None and not (name == "mn_nn_2")]
    if missing:
        raise LmcError(f"family {name} needs parameters: {', '.join(missing)}")
    extra = sorted(k for k, v in params.items() if v is not None and k not in fam.params)
    if extra:
        raise LmcError(f"family {name} does not take: {', '.join(extra)}")
    args = {p: params[p] for p in fam.params if params.get(p) is not None}
    if name == "subsetsum":
        return fam.build(args["set"], args["target"])
    return fam.build(**args)
