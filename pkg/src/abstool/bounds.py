"""Reachability bounds for approximately bisimilar states, with premise reporting."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .approx_bisim import greatest_eps_bisimilarity
from .lmc_core import Lmc, LmcError, check_tolerance
from .relations import Partition
from .reports import jsonable
from .solvers import INFINITE, _can_reach, expected_steps_vector, trace_set_probability, until_vector
from .weak_branching import build_mr, build_mw, greatest_weak_eps_bisimilarity, is_branching_eps_bisimulation

__all__ = [
    "FLAVORS",
    "BoundReport",
    "label_f_closure",
    "cannot_reach_goal",
    "f_discipline_holds",
    "goal_traces",
    "finite_horizon_report",
    "unbounded_report",
]

FLAVORS = ("step", "class", "label")
ZERO = Fraction(0)


@dataclass(frozen=True)
class BoundReport:
    s: str
    t: str
    flavor: str
    lhs: Fraction
    rhs: object
    premise: bool
    discipline: bool = True
    e_s: object = None
    e_t: object = None
    pr_s: Fraction | None = None
    pr_t: Fraction | None = None

    @property
    def vacuous(self) -> bool:
        return self.rhs is INFINITE

    @property
    def tight(self) -> bool:
        return not self.vacuous and self.lhs == self.rhs

    @property
    def holds(self) -> bool:
        return self.vacuous or self.lhs <= self.rhs

    @property
    def claimed(self) -> bool:
        """True when the bound's premises hold, so lhs ≤ rhs is guaranteed."""
        return self.premise and self.discipline

    def to_json(self) -> dict:
        out = {
            "pair": [self.s, self.t],
            "flavor": self.flavor,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tight": self.tight,
            "vacuous": self.vacuous,
            "premise": self.premise,
            "f_discipline": self.discipline,
            "holds": self.holds,
        }
        for key in ("e_s", "e_t", "pr_s", "pr_t"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return jsonable(out)


def _with_ap(m: Lmc, ap: str) -> frozenset[int]:
    return frozenset(s for s in range(m.n) if ap in m.labels[s])


def cannot_reach_goal(m: Lmc, goal_ap: str) -> frozenset[int]:
    goal = _with_ap(m, goal_ap)
    return frozenset(range(m.n)) - _can_reach(m, frozenset(range(m.n)), goal)


def f_discipline_holds(m: Lmc, goal_ap: str = "g", f_ap: str = "f") -> bool:
    return _with_ap(m, f_ap) == cannot_reach_goal(m, goal_ap)


def label_f_closure(m: Lmc, goal_ap: str = "g", f_ap: str = "f") -> Lmc:
    """Add ``f_ap`` to exactly the states with no path to a goal state."""
    if not _with_ap(m, goal_ap):
        raise LmcError(f"no state carries the goal proposition {goal_ap!r}")
    dead = cannot_reach_goal(m, goal_ap)
    used = _with_ap(m, f_ap)
    if used and used != dead:
        raise LmcError(f"proposition {f_ap!r} is already used on other states")
    labels = [lab | {f_ap} if s in dead else lab for s, lab in enumerate(m.labels)]
    return m.with_labels(labels)


def goal_traces(m: Lmc, k: int, goal_ap: str = "g") -> set[tuple[frozenset[str], ...]]:
    """Label sequences of length k+1 occurring in m whose last label contains the goal."""
    layer = {(m.labels[s],): {s} for s in range(m.n)}
    for _ in range(k):
        nxt: dict[tuple, set[int]] = {}
        for trace, states in layer.items():
            for u in states:
                for v in m.rows[u]:
                    nxt.setdefault(trace + (m.labels[v],), set()).add(v)
        layer = nxt
    return {t for t in layer if goal_ap in t[-1]}


def finite_horizon_report(
    m: Lmc, s: int, t: int, traces: Iterable[Sequence[frozenset[str]]], eps: Fraction
) -> BoundReport:
    eps = check_tolerance(eps)
    traces = [tuple(frozenset(x) for x in tr) for tr in traces]
    lengths = {len(tr) for tr in traces}
    if len(lengths) > 1:
        raise LmcError("trace set mixes lengths")
    k = lengths.pop() - 1 if lengths else 0
    ps = trace_set_probability(m, s, traces)
    pt = trace_set_probability(m, t, traces)
    premise = (s, t) in greatest_eps_bisimilarity(m, eps)
    return BoundReport(
        m.names[s], m.names[t], f"finite-horizon k={k}", abs(ps - pt),
        1 - (1 - eps) ** k, premise, True, pr_s=ps, pr_t=pt,
    )


def unbounded_report(
    m: Lmc,
    s: int,
    t: int,
    eps: Fraction,
    flavor: str = "step",
    partition: Partition | None = None,
    goal_ap: str = "g",
    f_ap: str = "f",
) -> BoundReport:
    """|Pr_s(◊g) − Pr_t(◊g)| against ε·E_s(N) for the chosen way of counting N."""
    eps = check_tolerance(eps)
    if flavor not in FLAVORS:
        raise LmcError(f"unknown flavor {flavor!r}; choose from {', '.join(FLAVORS)}")
    goal = _with_ap(m, goal_ap)
    reach = until_vector(m, range(m.n), goal)
    lhs = abs(reach[s] - reach[t])
    discipline = f_discipline_holds(m, goal_ap, f_ap)
    if flavor == "step":
        model = m
        premise = (s, t) in greatest_eps_bisimilarity(m, eps)
    elif flavor == "class":
        if partition is None:
            raise LmcError("the class flavor needs a partition")
        mr = build_mr(m, partition, eps)
        premise = partition.same_block(s, t) and bool(is_branching_eps_bisimulation(m, partition, eps))
        model = mr.lmc if mr else None
    else:
        model = build_mw(m).lmc
        premise = (s, t) in greatest_weak_eps_bisimilarity(m, eps)
    if model is None:
        e_s = e_t = INFINITE
    else:
        absorb = [u for u in range(model.n) if model.labels[u] & {goal_ap, f_ap}]
        steps = expected_steps_vector(model, absorb)
        e_s, e_t = steps[s], steps[t]
    rhs = INFINITE if e_s is INFINITE else eps * e_s
    return BoundReport(
        m.names[s], m.names[t], flavor, lhs, rhs, premise, discipline,
        e_s, e_t, reach[s], reach[t],
    )


def describe(report: BoundReport) -> str:
    lines = [
        f"pair {report.s} {report.t} ({report.flavor})",
        f"  lhs = {report.lhs}",
        f"  rhs = {report.rhs}",
        f"  premise: {'yes' if report.premise else 'no'}",
        f"  f-discipline: {'yes' if report.discipline else 'VIOLATED'}",
        f"  tight: {'yes' if report.tight else 'no'}",
    ]
    if report.vacuous:
        lines.append("  bound is vacuous (expected count infinite)")
    if not report.claimed:
        lines.append("  bound not claimed: a premise fails")
    return "\n".join(lines)
