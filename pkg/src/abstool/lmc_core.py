"""Labeled Markov chains with exact rational transition rows.

The :class:`Lmc` type is immutable.  Every constructor validates that rows
are probability distributions, and all downstream modules rely on the
declaration order of states for deterministic output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

Rat = Fraction
Row = Mapping[int, Fraction]

__all__ = [
    "Rat",
    "LmcError",
    "Lmc",
    "Perturbation",
    "parse_rat",
    "check_tolerance",
    "parse_lmc",
    "serialize_lmc",
    "direct_sum",
    "quotient",
    "apply_perturbation",
    "l1_distance",
    "format_label",
]


class LmcError(ValueError):
    """Raised for malformed models, files, or constructions."""


_NAME = r"[^\s{},#~:]+"
_STATE_RE = re.compile(rf"^state\s+({_NAME})\s*\{{([^}}]*)\}}\s*$")
_INIT_RE = re.compile(rf"^init\s+({_NAME})\s*$")
_TRANS_RE = re.compile(rf"^({_NAME})\s*->\s*({_NAME})\s*:\s*(\S+)\s*$")
_NAME_RE = re.compile(rf"^{_NAME}$")
_RAT_RE = re.compile(r"^(\d+(/\d+)?|\d*\.\d+|\d+\.\d*)$")


def parse_rat(text: str) -> Fraction:
    """Parse ``num/den`` or a finite decimal into an exact rational."""
    text = text.strip()
    if not _RAT_RE.match(text):
        raise LmcError(f"not a non-negative rational: {text!r}")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise LmcError(f"not a rational: {text!r}") from exc


def check_tolerance(eps: Fraction, name: str = "eps") -> Fraction:
    eps = Fraction(eps)
    if eps < 0 or eps > 1:
        raise LmcError(f"{name} must lie in [0, 1], got {eps}")
    return eps


def format_label(label: frozenset[str]) -> str:
    return "{" + ", ".join(sorted(label)) + "}"


@dataclass(frozen=True)
class Lmc:
    """A finite labeled Markov chain.

    ``rows[i]`` maps successor indices to positive probabilities; zero
    entries are dropped on construction so ``rows[i]`` is exactly Succ(i).
    """

    names: tuple[str, ...]
    labels: tuple[frozenset[str], ...]
    rows: tuple[Mapping[int, Fraction], ...]
    init: int = 0
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.names)
        if n == 0:
            raise LmcError("an LMC needs at least one state")
        if len(self.labels) != n or len(self.rows) != n:
            raise LmcError("names, labels and rows must have equal length")
        index: dict[str, int] = {}
        for i, name in enumerate(self.names):
            if not _NAME_RE.match(name):
                raise LmcError(f"invalid state name {name!r}")
            if name in index:
                raise LmcError(f"duplicate state {name!r}")
            index[name] = i
        if not 0 <= self.init < n:
            raise LmcError(f"init index {self.init} out of range")
        rows = []
        for i, row in enumerate(self.rows):
            clean: dict[int, Fraction] = {}
            for j in sorted(row):
                p = Fraction(row[j])
                if not 0 <= j < n:
                    raise LmcError(f"state {self.names[i]}: successor index {j} out of range")
                if p < 0 or p > 1:
                    raise LmcError(f"state {self.names[i]}: probability {p} outside [0, 1]")
                if p:
                    clean[j] = p
            total = sum(clean.values(), Fraction(0))
            if total != 1:
                raise LmcError(
                    f"state {self.names[i]}: row sum {total} ≠ 1 (deficit {1 - total})"
                )
            rows.append(clean)
        object.__setattr__(self, "rows", tuple(rows))
        object.__setattr__(self, "labels", tuple(frozenset(l) for l in self.labels))
        object.__setattr__(self, "_index", index)

    @classmethod
    def build(
        cls,
        states: Sequence[tuple[str, Iterable[str]]],
        transitions: Iterable[tuple[str, str, Fraction | int | str]],
        init: str | None = None,
    ) -> "Lmc":
        """Construct from named states and ``(src, dst, p)`` triples."""
        names = [name for name, _ in states]
        index = {name: i for i, name in enumerate(names)}
        rows: list[dict[int, Fraction]] = [{} for _ in names]
        for src, dst, p in transitions:
            if src not in index or dst not in index:
                raise LmcError(f"unknown state in transition {src} -> {dst}")
            prob = parse_rat(p) if isinstance(p, str) else Fraction(p)
            j = index[dst]
            rows[index[src]][j] = rows[index[src]].get(j, Fraction(0)) + prob
        if init is None:
            init_idx = 0
        elif init in index:
            init_idx = index[init]
        else:
            raise LmcError(f"unknown init state {init!r}")
        return cls(tuple(names), tuple(frozenset(l) for _, l in states), tuple(rows), init_idx)

    @property
    def n(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LmcError(f"unknown state {name!r}") from None

    def indices(self, names: Iterable[str]) -> frozenset[int]:
        return frozenset(self.index(x) for x in names)

    def prob(self, s: int, targets: Iterable[int]) -> Fraction:
        """P(s)(A) for a state set A."""
        row = self.rows[s]
        return sum((row[j] for j in targets if j in row), Fraction(0))

    def succ(self, s: int) -> tuple[int, ...]:
        return tuple(self.rows[s])

    def same_label(self, s: int) -> frozenset[int]:
        """L(s): all states sharing the label of ``s``."""
        lab = self.labels[s]
        return frozenset(i for i in range(self.n) if self.labels[i] == lab)

    def with_rows(self, rows: Sequence[Mapping[int, Fraction]]) -> "Lmc":
        return Lmc(self.names, self.labels, tuple(rows), self.init)

    def with_init(self, init: int | str) -> "Lmc":
        idx = self.index(init) if isinstance(init, str) else init
        return Lmc(self.names, self.labels, self.rows, idx)

    def with_labels(self, labels: Sequence[frozenset[str]]) -> "Lmc":
        return Lmc(self.names, tuple(labels), self.rows, self.init)


@dataclass(frozen=True)
class Perturbation:
    """Replacement rows for every state of some LMC."""

    rows: tuple[Mapping[int, Fraction], ...]

    def __post_init__(self) -> None:
        clean = []
        for i, row in enumerate(self.rows):
            if any(Fraction(p) < 0 for p in row.values()):
                raise LmcError(f"perturbation row {i} has a negative entry")
            total = sum((Fraction(p) for p in row.values()), Fraction(0))
            if total != 1:
                raise LmcError(f"perturbation row {i} sums to {total}, not 1")
            clean.append({j: Fraction(p) for j, p in sorted(row.items()) if p})
        object.__setattr__(self, "rows", tuple(clean))


def l1_distance(a: Row, b: Row) -> Fraction:
    keys = set(a) | set(b)
    return sum((abs(a.get(k, 0) - b.get(k, 0)) for k in keys), Fraction(0))


def parse_lmc(text: str) -> Lmc:
    """Parse the line-based LMC format; see the README for the grammar."""
    states: list[tuple[str, frozenset[str]]] = []
    seen: dict[str, int] = {}
    init: str | None = None
    init_line = 0
    trans: list[tuple[int, str, str, Fraction]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _STATE_RE.match(line):
            name = m.group(1)
            if name in seen:
                raise LmcError(f"line {lineno}: duplicate state {name!r}")
            aps = [a.strip() for a in m.group(2).split(",") if a.strip()]
            for ap in aps:
                if not _NAME_RE.match(ap):
                    raise LmcError(f"line {lineno}: invalid proposition {ap!r}")
            seen[name] = len(states)
            states.append((name, frozenset(aps)))
        elif m := _INIT_RE.match(line):
            if init is not None:
                raise LmcError(f"line {lineno}: init declared twice")
            init, init_line = m.group(1), lineno
        elif m := _TRANS_RE.match(line):
            try:
                p = parse_rat(m.group(3))
            except LmcError as exc:
                raise LmcError(f"line {lineno}: {exc}") from None
            trans.append((lineno, m.group(1), m.group(2), p))
        else:
            raise LmcError(f"line {lineno}: syntax error: {raw.strip()!r}")
    if not states:
        raise LmcError("no states declared")
    if init is None:
        raise LmcError("missing init declaration")
    if init not in seen:
        raise LmcError(f"line {init_line}: unknown init state {init!r}")
    rows: list[dict[int, Fraction]] = [{} for _ in states]
    for lineno, src, dst, p in trans:
        for name in (src, dst):
            if name not in seen:
                raise LmcError(f"line {lineno}: unknown state {name!r}")
        i, j = seen[src], seen[dst]
        if j in rows[i]:
            raise LmcError(f"line {lineno}: duplicate transition {src} -> {dst}")
        if p > 1:
            raise LmcError(f"line {lineno}: probability {p} exceeds 1")
        rows[i][j] = p
    return Lmc(
        tuple(n for n, _ in states),
        tuple(l for _, l in states),
        tuple(rows),
        seen[init],
    )


def serialize_lmc(m: Lmc) -> str:
    out = [f"state {name} {format_label(lab)}" for name, lab in zip(m.names, m.labels)]
    out.append(f"init {m.names[m.init]}")
    for i, row in enumerate(m.rows):
        for j, p in row.items():
            out.append(f"{m.names[i]} -> {m.names[j]} : {p}")
    return "\n".join(out) + "\n"


def direct_sum(m: Lmc, n: Lmc, prefixes: tuple[str, str] = ("M.", "N.")) -> Lmc:
    """Disjoint union; init is ``m``'s init.

    Names stay verbatim when disjoint.  On any clash every left name gets
    ``prefixes[0]`` and every right name ``prefixes[1]``.
    """
    if set(m.names) & set(n.names):
        left = tuple(prefixes[0] + x for x in m.names)
        right = tuple(prefixes[1] + x for x in n.names)
    else:
        left, right = m.names, n.names
    off = m.n
    rows = list(m.rows) + [{j + off: p for j, p in row.items()} for row in n.rows]
    return Lmc(left + right, m.labels + n.labels, tuple(rows), m.init)


@dataclass(frozen=True)
class Centroid:
    """Quotient policy: block rows are centroid distributions at tolerance eps."""

    eps: Fraction


EXACT = "exact"


def block_name(m: Lmc, block: Sequence[int]) -> str:
    return "[" + m.names[min(block)] + "]"


def quotient(m: Lmc, partition, policy: str | Centroid = EXACT) -> Lmc:
    """One state per block, named ``[<least member>]``.

    ``partition`` is any object with a ``blocks`` attribute (a sequence of
    index tuples covering all states).
    """
    blocks = [tuple(sorted(b)) for b in partition.blocks]
    where = {}
    for bi, block in enumerate(blocks):
        labs = {m.labels[s] for s in block}
        if len(labs) != 1:
            raise LmcError(f"block {block_name(m, block)} mixes labels")
        for s in block:
            where[s] = bi
    if len(where) != m.n:
        raise LmcError("partition does not cover every state")

    def lifted(s: int) -> tuple[Fraction, ...]:
        vec = [Fraction(0)] * len(blocks)
        for j, p in m.rows[s].items():
            vec[where[j]] += p
        return tuple(vec)

    rows: list[dict[int, Fraction]] = []
    if policy == EXACT:
        for block in blocks:
            ref = lifted(block[0])
            for s in block[1:]:
                other = lifted(s)
                if other != ref:
                    c = next(c for c in range(len(blocks)) if ref[c] != other[c])
                    raise LmcError(
                        f"rows disagree on block {block_name(m, block)}, classes "
                        f"{block_name(m, blocks[c])}: {m.names[block[0]]} gives {ref[c]} "
                        f"vs {m.names[s]} gives {other[c]}"
                    )
            rows.append({c: p for c, p in enumerate(ref) if p})
    elif isinstance(policy, Centroid):
        from .perturbed import centroid

        for block in blocks:
            mu = centroid([lifted(s) for s in block], policy.eps)
            if mu is None:
                raise LmcError(
                    f"no centroid within {policy.eps} for block {block_name(m, block)}"
                )
            rows.append({c: p for c, p in enumerate(mu) if p})
    else:
        raise LmcError(f"unknown quotient policy {policy!r}")
    names = tuple(block_name(m, b) for b in blocks)
    labels = tuple(m.labels[b[0]] for b in blocks)
    return Lmc(names, labels, tuple(rows), where[m.init])


def apply_perturbation(m: Lmc, d: Perturbation) -> tuple[Lmc, tuple[Fraction, ...]]:
    """Return the perturbed LMC and the exact L1 distance per state."""
    if len(d.rows) != m.n:
        raise LmcError(f"perturbation covers {len(d.rows)} states, model has {m.n}")
    for i, row in enumerate(d.rows):
        if any(not 0 <= j < m.n for j in row):
            raise LmcError(f"perturbation row {i} references an unknown state")
    new = m.with_rows(d.rows)
    dist = tuple(l1_distance(a, b) for a, b in zip(m.rows, new.rows))
    return new, dist
