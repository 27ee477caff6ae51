"""Reflexive-symmetric relations, partitions, and constrained partition enumeration."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Sequence

from .lmc_core import Lmc, LmcError

__all__ = [
    "DEFAULT_CAP",
    "SearchCapExceeded",
    "search_cap",
    "Relation",
    "Partition",
    "image",
    "components",
    "enumerate_partitions",
    "parse_partition",
    "parse_relation",
    "format_partition",
    "format_relation",
]

DEFAULT_CAP = 14


class SearchCapExceeded(RuntimeError):
    """An exhaustive search was asked to cover more states than allowed."""


def search_cap(cap: int | None = None) -> int:
    if cap is not None:
        return cap
    env = os.environ.get("ABSTOOL_CAP")
    if env:
        try:
            return int(env)
        except ValueError:
            raise LmcError(f"ABSTOOL_CAP must be an integer, got {env!r}") from None
    return DEFAULT_CAP


@dataclass(frozen=True)
class Relation:
    """Reflexive and symmetric relation; only off-diagonal pairs (i < j) are stored."""

    n: int
    pairs: frozenset[tuple[int, int]]

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Relation":
        clean = set()
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise LmcError(f"pair ({i}, {j}) out of range")
            if i != j:
                clean.add((min(i, j), max(i, j)))
        return cls(n, frozenset(clean))

    @classmethod
    def identity(cls, n: int) -> "Relation":
        return cls(n, frozenset())

    @classmethod
    def full(cls, n: int) -> "Relation":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def from_partition(cls, p: "Partition") -> "Relation":
        pairs = set()
        for block in p.blocks:
            for a in range(len(block)):
                for b in range(a + 1, len(block)):
                    pairs.add((block[a], block[b]))
        return cls(p.n, frozenset(pairs))

    def __contains__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        return i == j or (min(i, j), max(i, j)) in self.pairs

    def related(self, i: int) -> frozenset[int]:
        out = {i}
        for a, b in self.pairs:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return frozenset(out)

    def neighbours(self) -> tuple[frozenset[int], ...]:
        nb: list[set[int]] = [{i} for i in range(self.n)]
        for a, b in self.pairs:
            nb[a].add(b)
            nb[b].add(a)
        return tuple(frozenset(x) for x in nb)

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def is_equivalence(self) -> bool:
        nb = self.neighbours()
        return all(nb[j] == nb[i] for i, j in self.pairs)

    def issubset(self, other: "Relation") -> bool:
        return self.pairs <= other.pairs


@dataclass(frozen=True)
class Partition:
    """Blocks of state indices, canonically sorted by least member."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        blocks = sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else -1)
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise LmcError("empty block")
            for s in b:
                if not 0 <= s < self.n or s in seen:
                    raise LmcError(f"state index {s} repeated or out of range")
                seen.add(s)
        if len(seen) != self.n:
            raise LmcError("partition does not cover all states")
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def from_blocks(cls, n: int, blocks: Iterable[Iterable[int]], fill: bool = False) -> "Partition":
        blocks = [tuple(b) for b in blocks]
        if fill:
            covered = {s for b in blocks for s in b}
            blocks += [(s,) for s in range(n) if s not in covered]
        return cls(n, tuple(blocks))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(n, tuple((i,) for i in range(n)))

    def block_index(self) -> tuple[int, ...]:
        out = [0] * self.n
        for bi, b in enumerate(self.blocks):
            for s in b:
                out[s] = bi
        return tuple(out)

    def block_of(self, s: int) -> tuple[int, ...]:
        for b in self.blocks:
            if s in b:
                return b
        raise LmcError(f"state {s} not covered")

    def same_block(self, s: int, t: int) -> bool:
        return t in self.block_of(s)


def image(r: Relation, a: Iterable[int]) -> frozenset[int]:
    """R(A) = {t | (s, t) ∈ R for some s ∈ A}."""
    a = set(a)
    out = set(a)
    for i, j in r.pairs:
        if i in a:
            out.add(j)
        if j in a:
            out.add(i)
    return frozenset(out)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def components(r: Relation) -> Partition:
    """Connected components of the pair graph: the minimal nonempty R-closed sets."""
    uf = _UnionFind(r.n)
    for i, j in r.pairs:
        uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for s in range(r.n):
        groups.setdefault(uf.find(s), []).append(s)
    return Partition(r.n, tuple(tuple(g) for g in groups.values()))


def enumerate_partitions(
    labels: Sequence[Hashable],
    must_link: Iterable[tuple[int, int]] = (),
    universe: Iterable[int] | None = None,
    cap: int | None = None,
    accept_block: Callable[[tuple[int, ...]], bool] | None = None,
) -> Iterator[Partition]:
    """Stream label-homogeneous partitions of ``universe`` honouring must-link pairs.

    States of ``labels`` outside the universe become singleton blocks so
    every yielded value is a partition of all states.  Enumeration follows
    restricted-growth-string order over the must-link groups, which are
    ordered by their least member.  ``accept_block`` optionally filters
    finished partitions block by block.
    """
    n = len(labels)
    uni = sorted(set(range(n) if universe is None else universe))
    limit = search_cap(cap)
    if len(uni) > limit:
        raise SearchCapExceeded(
            f"search space too large: {len(uni)} states exceed the cap of {limit}"
        )
    uni_set = set(uni)
    uf = _UnionFind(n)
    for a, b in must_link:
        if a not in uni_set or b not in uni_set:
            raise LmcError(f"must-link pair ({a}, {b}) outside the universe")
        uf.union(a, b)
    groups: dict[int, list[int]] = {}
    for s in uni:
        groups.setdefault(uf.find(s), []).append(s)
    units = sorted(groups.values(), key=lambda g: g[0])
    for g in units:
        if len({labels[s] for s in g}) != 1:
            return
    unit_label = [labels[g[0]] for g in units]
    outside = tuple((s,) for s in range(n) if s not in uni_set)

    k = len(units)
    assign = [0] * k
    block_labels: list[Hashable] = []

    def emit() -> Partition | None:
        blocks: list[list[int]] = [[] for _ in block_labels]
        for u, b in enumerate(assign):
            blocks[b].extend(units[u])
        tup = tuple(tuple(sorted(b)) for b in blocks)
        if accept_block is not None and not all(accept_block(b) for b in tup):
            return None
        return Partition(n, tup + outside)

    def rec(u: int) -> Iterator[Partition]:
        if u == k:
            p = emit()
            if p is not None:
                yield p
            return
        lab = unit_label[u]
        for b in range(len(block_labels)):
            if block_labels[b] == lab:
                assign[u] = b
                yield from rec(u + 1)
        assign[u] = len(block_labels)
        block_labels.append(lab)
        yield from rec(u + 1)
        block_labels.pop()

    yield from rec(0)


_BLOCK_RE = re.compile(r"\{([^}]*)\}")


def parse_partition(text: str, m: Lmc, fill: bool = True) -> Partition:
    """Parse ``{s, t} {u}`` blocks (any number per line, ``#`` comments).

    Unmentioned states become singletons when ``fill`` is set.
    """
    blocks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rest = _BLOCK_RE.sub("", line).strip()
        if rest:
            raise LmcError(f"line {lineno}: syntax error near {rest!r}")
        for body in _BLOCK_RE.findall(line):
            names = [x.strip() for x in body.split(",") if x.strip()]
            try:
                blocks.append(tuple(m.index(x) for x in names))
            except LmcError as exc:
                raise LmcError(f"line {lineno}: {exc}") from None
    return Partition.from_blocks(m.n, blocks, fill=fill)


def parse_relation(text: str, m: Lmc) -> Relation:
    """Parse one ``s ~ t`` pair per line; closure is implied."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [x.strip() for x in line.split("~")]
        if len(parts) != 2 or not all(parts):
            raise LmcError(f"line {lineno}: expected 's ~ t', got {raw.strip()!r}")
        try:
            pairs.append((m.index(parts[0]), m.index(parts[1])))
        except LmcError as exc:
            raise LmcError(f"line {lineno}: {exc}") from None
    return Relation.from_pairs(m.n, pairs)


def format_partition(p: Partition, m: Lmc) -> str:
    return "\n".join("{" + ", ".join(m.names[s] for s in b) + "}" for b in p.blocks) + "\n"


def format_relation(r: Relation, m: Lmc) -> str:
    return "".join(f"{m.names[i]} ~ {m.names[j]}\n" for i, j in r.sorted_pairs())
