"""Exact numeric engines: linear systems, reachability, max-flow, LP feasibility."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

from .lmc_core import Lmc

__all__ = [
    "INFINITE",
    "solve_linear",
    "solve_linear_multi",
    "exit_distribution",
    "until_vector",
    "until_probability",
    "always_vector",
    "always_probability",
    "bounded_reach",
    "trace_set_probability",
    "expected_steps_vector",
    "expected_steps",
    "FlowNetwork",
    "max_flow",
    "min_cut",
    "max_flow_assignment",
    "Constraint",
    "lp_feasible",
]

ZERO = Fraction(0)
ONE = Fraction(1)


class _Infinite:
    """Symbolic +infinity for expectations that diverge."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "INFINITE"

    def __str__(self) -> str:
        return "infinite"

    def __gt__(self, other) -> bool:
        return other is not self

    def __ge__(self, other) -> bool:
        return True

    def __lt__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return other is self

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def solve_linear(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Solve ``a x = b`` exactly by Gauss-Jordan elimination.

    The pivot in each column is the first row (lowest index) with a nonzero
    entry, so the elimination order is fully determined by the input.
    """
    return [row[0] for row in solve_linear_multi(a, [[v] for v in b])]


def solve_linear_multi(a: list[list[Fraction]], b: list[list[Fraction]]) -> list[list[Fraction]]:
    """Solve ``a X = B`` for a matrix right-hand side (rows of ``b`` align with ``a``)."""
    n = len(a)
    k = len(b[0]) if b else 0
    w = n + k
    m = [row[:] + rhs[:] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise ZeroDivisionError("singular system")
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
        pr = m[col]
        inv = 1 / pr[col]
        if inv != 1:
            for j in range(col, w):
                pr[j] *= inv
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                row = m[r]
                for j in range(col, w):
                    if pr[j]:
                        row[j] -= f * pr[j]
    return [m[i][n:] for i in range(n)]


def _can_reach(m: Lmc, allowed: frozenset[int], target: frozenset[int]) -> set[int]:
    """States in ``allowed ∪ target`` with a path to target through allowed."""
    pred: dict[int, list[int]] = {}
    for u in allowed:
        for v in m.rows[u]:
            pred.setdefault(v, []).append(u)
    seen = set(target)
    stack = list(target)
    while stack:
        v = stack.pop()
        for u in pred.get(v, ()):
            if u not in seen and u in allowed:
                seen.add(u)
                stack.append(u)
    return seen


def until_vector(m: Lmc, allowed: Iterable[int], target: Iterable[int]) -> list[Fraction]:
    """Pr_u(allowed U target) for every state u; target membership wins."""
    target = frozenset(target)
    allowed = frozenset(allowed) - target
    reach = _can_reach(m, allowed, target)
    unknown = sorted(u for u in reach if u not in target)
    pos = {u: k for k, u in enumerate(unknown)}
    x = [ZERO] * m.n
    for u in target:
        x[u] = ONE
    if unknown:
        k = len(unknown)
        a = [[ZERO] * k for _ in range(k)]
        b = [ZERO] * k
        for u, r in pos.items():
            a[r][r] = ONE
            for v, p in m.rows[u].items():
                if v in target:
                    b[r] += p
                elif v in pos:
                    a[r][pos[v]] -= p
        for u, val in zip(unknown, solve_linear(a, b)):
            x[u] = val
    return x


def until_probability(m: Lmc, s: int, allowed: Iterable[int], target: Iterable[int]) -> Fraction:
    return until_vector(m, allowed, target)[s]


def always_vector(m: Lmc, inside: Iterable[int]) -> list[Fraction]:
    """Pr_u(□ inside) for every u (zero outside ``inside``)."""
    inside = frozenset(inside)
    leave = until_vector(m, inside, frozenset(range(m.n)) - inside)
    return [ONE - leave[u] if u in inside else ZERO for u in range(m.n)]


def always_probability(m: Lmc, s: int, inside: Iterable[int]) -> Fraction:
    return always_vector(m, inside)[s]


def exit_distribution(m: Lmc, inside: Iterable[int]) -> dict[int, dict[int, Fraction]]:
    """For u in ``inside``: t ↦ Pr_u(inside U t) over states t outside.

    One elimination with a column per exit target; the mass missing from
    each row is Pr_u(□ inside).
    """
    inside = frozenset(inside)
    exits = sorted({v for u in inside for v in m.rows[u] if v not in inside})
    out: dict[int, dict[int, Fraction]] = {u: {} for u in inside}
    if not exits:
        return out
    reach = _can_reach(m, inside, frozenset(exits))
    live = sorted(u for u in reach if u in inside)
    pos = {u: r for r, u in enumerate(live)}
    col = {t: c for c, t in enumerate(exits)}
    k = len(live)
    a = [[ZERO] * k for _ in range(k)]
    b = [[ZERO] * len(exits) for _ in range(k)]
    for u, r in pos.items():
        a[r][r] = ONE
        for v, p in m.rows[u].items():
            if v in pos:
                a[r][pos[v]] -= p
            elif v in col:
                b[r][col[v]] += p
    for u, sol in zip(live, solve_linear_multi(a, b)):
        out[u] = {t: x for t, x in zip(exits, sol) if x}
    return out


def bounded_reach(m: Lmc, s: int, target: Iterable[int], n: int) -> Fraction:
    """Pr_s(◊^{≤n} target) by n rounds of exact value iteration."""
    target = frozenset(target)
    x = [ONE if u in target else ZERO for u in range(m.n)]
    for _ in range(n):
        x = [
            ONE if u in target else sum((p * x[v] for v, p in m.rows[u].items()), ZERO)
            for u in range(m.n)
        ]
    return x[s]


def trace_set_probability(
    m: Lmc, s: int, traces: Iterable[Sequence[frozenset[str]]]
) -> Fraction:
    """Probability that the first k+1 labels from ``s`` form a trace in the set."""
    tset = {tuple(frozenset(x) for x in t) for t in traces}
    if not tset:
        return ZERO
    lengths = {len(t) for t in tset}
    if len(lengths) != 1:
        raise ValueError("all traces must have the same length")
    (length,) = lengths
    prefixes = {t[:i] for t in tset for i in range(1, length + 1)}
    layer: dict[tuple, dict[int, Fraction]] = {}
    first = (m.labels[s],)
    if first in prefixes:
        layer[first] = {s: ONE}
    for _ in range(length - 1):
        nxt: dict[tuple, dict[int, Fraction]] = {}
        for prefix, dist in layer.items():
            for u, pu in dist.items():
                for v, p in m.rows[u].items():
                    key = prefix + (m.labels[v],)
                    if key in prefixes:
                        bucket = nxt.setdefault(key, {})
                        bucket[v] = bucket.get(v, ZERO) + pu * p
        layer = nxt
    return sum((sum(d.values(), ZERO) for d in layer.values()), ZERO)


def expected_steps_vector(m: Lmc, absorb: Iterable[int]) -> list:
    """E_u(steps until absorb) per state; INFINITE where absorption is not sure."""
    absorb = frozenset(absorb)
    everything = frozenset(range(m.n))
    reach = until_vector(m, everything, absorb)
    sure = [u for u in range(m.n) if reach[u] == ONE and u not in absorb]
    pos = {u: k for k, u in enumerate(sure)}
    out: list = [INFINITE if reach[u] != ONE else ZERO for u in range(m.n)]
    if sure:
        k = len(sure)
        a = [[ZERO] * k for _ in range(k)]
        b = [ONE] * k
        for u, r in pos.items():
            a[r][r] += ONE
            for v, p in m.rows[u].items():
                if v in pos:
                    a[r][pos[v]] -= p
        for u, val in zip(sure, solve_linear(a, b)):
            out[u] = val
    return out


def expected_steps(m: Lmc, s: int, absorb: Iterable[int]):
    return expected_steps_vector(m, absorb)[s]


@dataclass(frozen=True)
class FlowNetwork:
    """Directed network; an arc capacity of ``None`` means unbounded."""

    nodes: tuple[Hashable, ...]
    arcs: tuple[tuple[Hashable, Hashable, Fraction | None], ...]
    source: Hashable
    sink: Hashable

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for u, v, cap in self.arcs:
            if v == self.source or u == self.sink:
                raise ValueError("arcs may not enter the source or leave the sink")
            if cap is None:
                g.add_edge(u, v)
            else:
                if cap < 0:
                    raise ValueError("negative capacity")
                prev = g.get_edge_data(u, v)
                if prev is not None and "capacity" in prev:
                    cap = prev["capacity"] + cap
                g.add_edge(u, v, capacity=Fraction(cap))
        return g


def max_flow(net: FlowNetwork) -> Fraction:
    return Fraction(nx.maximum_flow_value(net.graph(), net.source, net.sink, flow_func=edmonds_karp))


def min_cut(net: FlowNetwork) -> tuple[Fraction, frozenset]:
    """Max-flow value and the source side of the minimal minimum cut."""
    res = edmonds_karp(net.graph(), net.source, net.sink)
    # nx.minimum_cut reports the maximal source side; walk the residual
    # graph from the source instead to get the minimal one
    side = {net.source}
    todo = [net.source]
    while todo:
        u = todo.pop()
        for v, d in res[u].items():
            if v not in side and d["flow"] < d["capacity"]:
                side.add(v)
                todo.append(v)
    return Fraction(res.graph["flow_value"]), frozenset(side)


def max_flow_assignment(net: FlowNetwork) -> tuple[Fraction, dict]:
    value, flows = nx.maximum_flow(net.graph(), net.source, net.sink, flow_func=edmonds_karp)
    return Fraction(value), flows


# ---------------------------------------------------------------- simplex

@dataclass(frozen=True)
class Constraint:
    """``sum(coeffs[j] * x_j) <op> rhs`` with op one of ``<=``, ``>=``, ``==``."""

    coeffs: dict[int, Fraction]
    op: str
    rhs: Fraction


def lp_feasible(nvars: int, constraints: Sequence[Constraint]) -> tuple[Fraction, ...] | None:
    """Find a point with x ≥ 0 satisfying all constraints, or return None.

    Phase-one simplex on a dense exact tableau with Bland's rule.
    """
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    kinds: list[str] = []
    for c in constraints:
        if c.op not in ("<=", ">=", "=="):
            raise ValueError(f"bad operator {c.op!r}")
        coeffs = [Fraction(0)] * nvars
        for j, v in c.coeffs.items():
            coeffs[j] += Fraction(v)
        b = Fraction(c.rhs)
        op = c.op
        if b < 0:
            coeffs = [-v for v in coeffs]
            b = -b
            op = {"<=": ">=", ">=": "<=", "==": "=="}[op]
        rows.append(coeffs)
        rhs.append(b)
        kinds.append(op)

    m = len(rows)
    n_slack = sum(1 for k in kinds if k != "==")
    n_art = sum(1 for k in kinds if k != "<=")
    width = nvars + n_slack + n_art
    tab = [[Fraction(0)] * (width + 1) for _ in range(m)]
    basis = [0] * m
    si, ai = nvars, nvars + n_slack
    art_cols = []
    for r, (coeffs, b, op) in enumerate(zip(rows, rhs, kinds)):
        tab[r][:nvars] = coeffs
        tab[r][width] = b
        if op == "<=":
            tab[r][si] = Fraction(1)
            basis[r] = si
            si += 1
        else:
            if op == ">=":
                tab[r][si] = Fraction(-1)
                si += 1
            tab[r][ai] = Fraction(1)
            basis[r] = ai
            art_cols.append(ai)
            ai += 1
    art = set(art_cols)

    # reduced costs of the phase-one objective (minimise the sum of artificials)
    cost = [Fraction(0)] * (width + 1)
    for r in range(m):
        if basis[r] in art:
            for k in range(width + 1):
                cost[k] -= tab[r][k]
    for a in art:
        cost[a] = Fraction(0)

    while True:
        enter = next((j for j in range(width) if cost[j] < 0), None)
        if enter is None:
            break
        best = None
        for r in range(m):
            a = tab[r][enter]
            if a > 0:
                ratio = tab[r][width] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[r] < basis[best[1]]):
                    best = (ratio, r)
        if best is None:
            break  # unbounded direction; cannot happen for this bounded-below objective
        r = best[1]
        piv = tab[r][enter]
        prow = tab[r]
        if piv != 1:
            for k in range(width + 1):
                prow[k] /= piv
        for rr in range(m):
            if rr != r and tab[rr][enter] != 0:
                f = tab[rr][enter]
                row = tab[rr]
                for k in range(width + 1):
                    if prow[k]:
                        row[k] -= f * prow[k]
        f = cost[enter]
        for k in range(width + 1):
            if prow[k]:
                cost[k] -= f * prow[k]
        basis[r] = enter

    if -cost[width] != 0:
        return None
    x = [Fraction(0)] * nvars
    for r, b in enumerate(basis):
        if b < nvars:
            x[b] = tab[r][width]
    return tuple(x)
