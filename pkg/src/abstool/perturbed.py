"""ε-perturbed bisimulation: centroids, perturbation synthesis, and partition search."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .approx_bisim import is_transitive_eps_bisimulation, lifted_rows
from .lmc_core import Lmc, LmcError, Perturbation, apply_perturbation, check_tolerance, direct_sum
from .relations import Partition, enumerate_partitions
from .reports import CheckReport, jsonable
from .solvers import Constraint, lp_feasible

__all__ = [
    "CentroidCertificate",
    "SearchResult",
    "centroid",
    "is_eps_perturbed_bisimulation",
    "synthesize_perturbation",
    "search_partitions",
    "decide_perturbed_states",
    "decide_transitive_states",
    "decide_perturbed_bisimilar",
    "decide_transitive_eps_bisimilar",
    "certificate_json",
]

ZERO = Fraction(0)


def _l1(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((abs(x - y) for x, y in zip(a, b)), ZERO)


def centroid(rows: Sequence[Sequence[Fraction]], eps: Fraction) -> tuple[Fraction, ...] | None:
    """A distribution within L1 distance ε of every row, or None.

    Member rows are tried first; otherwise the LP over the union of the
    rows' supports decides.
    """
    eps = check_tolerance(eps)
    if not rows:
        raise LmcError("centroid needs at least one row")
    rows = [tuple(Fraction(x) for x in r) for r in rows]
    k = len(rows[0])
    for r in rows:
        if len(r) != k or any(x < 0 for x in r) or sum(r, ZERO) != 1:
            raise LmcError(f"malformed distribution {r}")
    for cand in rows:
        if all(_l1(cand, r) <= eps for r in rows):
            return cand
    support = [i for i in range(k) if any(r[i] for r in rows)]
    w = len(support)
    # variables: x_0..x_{w-1}, then d_{l,i} at w + l*w + i
    cons = [Constraint({c: Fraction(1) for c in range(w)}, "==", Fraction(1))]
    for li, r in enumerate(rows):
        base = w + li * w
        for c, i in enumerate(support):
            cons.append(Constraint({c: Fraction(1), base + c: Fraction(-1)}, "<=", r[i]))
            cons.append(Constraint({c: Fraction(-1), base + c: Fraction(-1)}, "<=", -r[i]))
        cons.append(Constraint({base + c: Fraction(1) for c in range(w)}, "<=", eps))
    point = lp_feasible(w + w * len(rows), cons)
    if point is None:
        return None
    mu = [ZERO] * k
    for c, i in enumerate(support):
        mu[i] = point[c]
    mu = tuple(mu)
    if sum(mu, ZERO) != 1 or any(_l1(mu, r) > eps for r in rows):
        raise AssertionError("LP point violates the centroid constraints")
    return mu


@dataclass(frozen=True)
class CentroidCertificate:
    """Per-block centroid over block indices and per-state L1 distance to it."""

    partition: Partition
    eps: Fraction
    centroids: tuple[tuple[Fraction, ...], ...]
    distances: tuple[Fraction, ...]

    def to_json_for(self, m: Lmc) -> dict:
        names = ["[" + m.names[b[0]] + "]" for b in self.partition.blocks]
        return {
            "eps": str(self.eps),
            "blocks": [[m.names[x] for x in b] for b in self.partition.blocks],
            "centroids": {
                names[bi]: {names[c]: str(q) for c, q in enumerate(mu) if q}
                for bi, mu in enumerate(self.centroids)
            },
            "distances": {m.names[s]: str(d) for s, d in enumerate(self.distances)},
        }


def _dense(row: dict[int, Fraction], k: int) -> tuple[Fraction, ...]:
    return tuple(row.get(c, ZERO) for c in range(k))


def is_eps_perturbed_bisimulation(m: Lmc, p: Partition, eps: Fraction) -> CheckReport:
    eps = check_tolerance(eps)
    trans = is_transitive_eps_bisimulation(m, p, eps)
    if not trans:
        return CheckReport(False, "eps-perturbed-bisimulation", trans.message, trans.witness)
    k = len(p.blocks)
    lifted = [_dense(r, k) for r in lifted_rows(m, p)]
    cents = []
    for block in p.blocks:
        mu = centroid([lifted[s] for s in block], eps)
        if mu is None:
            return CheckReport(
                False,
                "eps-perturbed-bisimulation",
                f"no centroid within {eps} for block [{m.names[block[0]]}]",
                {"block": [m.names[x] for x in block]},
            )
        cents.append(mu)
    where = p.block_index()
    dist = tuple(_l1(lifted[s], cents[where[s]]) for s in range(m.n))
    return CheckReport(
        True, "eps-perturbed-bisimulation",
        certificate=CentroidCertificate(p, eps, tuple(cents), dist),
    )


def synthesize_perturbation(m: Lmc, cert: CentroidCertificate) -> Perturbation:
    """Move each state's block mass onto its block centroid.

    Surplus on a block is taken from its members in state order, each
    member giving at most what the state sends there; deficit is added to
    the block's least member.
    """
    p = cert.partition
    k = len(p.blocks)
    where = p.block_index()
    lifted = [_dense(r, k) for r in lifted_rows(m, p)]
    rows = []
    for s in range(m.n):
        mu = cert.centroids[where[s]]
        if len(mu) != k or sum(mu, ZERO) != 1 or _l1(lifted[s], mu) > cert.eps:
            raise LmcError(f"certificate invalid at state {m.names[s]}")
        row = dict(m.rows[s])
        for b, block in enumerate(p.blocks):
            diff = lifted[s][b] - mu[b]
            if diff > 0:
                for t in block:
                    if not diff:
                        break
                    take = min(diff, row.get(t, ZERO))
                    if take:
                        row[t] -= take
                        diff -= take
            elif diff < 0:
                row[block[0]] = row.get(block[0], ZERO) - diff
        rows.append({t: q for t, q in row.items() if q})
    pert = Perturbation(tuple(rows))
    new, dist = apply_perturbation(m, pert)
    if any(d > cert.eps for d in dist):
        raise AssertionError("synthesized perturbation exceeds eps")
    new_lifted = lifted_rows(new, p)
    for block in p.blocks:
        if any(new_lifted[s] != new_lifted[block[0]] for s in block):
            raise AssertionError("partition is not an exact bisimulation after perturbation")
    return pert


@dataclass(frozen=True)
class SearchResult:
    """Outcome of an exhaustive partition search."""

    found: bool
    kind: str
    examined: int
    partition: Partition | None = None
    report: CheckReport | None = None
    perturbation: Perturbation | None = None

    def __bool__(self) -> bool:
        return self.found


def _check(kind: str, m: Lmc, p: Partition, eps: Fraction) -> CheckReport:
    if kind == "transitive":
        return is_transitive_eps_bisimulation(m, p, eps)
    if kind == "perturbed":
        return is_eps_perturbed_bisimulation(m, p, eps)
    if kind == "branching":
        from .weak_branching import is_branching_eps_bisimulation

        return is_branching_eps_bisimulation(m, p, eps)
    raise LmcError(f"unknown check kind {kind!r}")


def _first_in_chunk(args) -> tuple[int, CheckReport] | None:
    kind, m, eps, chunk = args
    for pos, p in enumerate(chunk):
        rep = _check(kind, m, p, eps)
        if rep:
            return pos, rep
    return None


def _chunks(it: Iterator[Partition], size: int) -> Iterator[list[Partition]]:
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield chunk


def search_partitions(
    m: Lmc,
    kind: str,
    eps: Fraction,
    must_link: Sequence[tuple[int, int]],
    cap: int | None = None,
    jobs: int = 1,
    accept_block=None,
) -> SearchResult:
    """Return the first partition (in enumeration order) passing the ``kind`` check.

    With ``jobs > 1`` chunks are checked in worker processes; results are
    consumed in order so the reported partition does not depend on ``jobs``.
    """
    eps = check_tolerance(eps)
    stream = enumerate_partitions(m.labels, must_link, cap=cap, accept_block=accept_block)
    examined = 0
    found: tuple[Partition, CheckReport] | None = None
    if jobs <= 1:
        for p in stream:
            examined += 1
            rep = _check(kind, m, p, eps)
            if rep:
                found = (p, rep)
                break
    else:
        size = 64
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pending = []
            chunks = _chunks(stream, size)
            for chunk in chunks:
                pending.append((chunk, pool.submit(_first_in_chunk, (kind, m, eps, chunk))))
                if len(pending) < 2 * jobs:
                    continue
                chunk0, fut = pending.pop(0)
                hit = fut.result()
                if hit is not None:
                    examined += hit[0] + 1
                    found = (chunk0[hit[0]], hit[1])
                    break
                examined += len(chunk0)
            while found is None and pending:
                chunk0, fut = pending.pop(0)
                hit = fut.result()
                if hit is not None:
                    examined += hit[0] + 1
                    found = (chunk0[hit[0]], hit[1])
                else:
                    examined += len(chunk0)
            for _, fut in pending:
                fut.cancel()
    if found is None:
        return SearchResult(False, kind, examined)
    p, rep = found
    pert = None
    if kind == "perturbed":
        pert = synthesize_perturbation(m, rep.certificate)
    return SearchResult(True, kind, examined, p, rep, pert)


def decide_perturbed_states(
    m: Lmc, s: int, t: int, eps: Fraction, cap: int | None = None, jobs: int = 1
) -> SearchResult:
    """Search for an ε-perturbed bisimulation of ``m`` relating s and t."""
    return search_partitions(m, "perturbed", eps, [(s, t)], cap, jobs)


def decide_transitive_states(
    m: Lmc, s: int, t: int, eps: Fraction, cap: int | None = None, jobs: int = 1
) -> SearchResult:
    return search_partitions(m, "transitive", eps, [(s, t)], cap, jobs)


def _sum_search(
    kind: str, m: Lmc, n: Lmc, eps: Fraction, cap, jobs, require_both_halves: bool
) -> tuple[Lmc, SearchResult]:
    total = direct_sum(m, n)
    split = m.n
    accept = (lambda block: block[0] < split <= block[-1]) if require_both_halves else None
    res = search_partitions(total, kind, eps, [(m.init, n.init + split)], cap, jobs, accept)
    return total, res


def decide_perturbed_bisimilar(
    m: Lmc,
    n: Lmc,
    eps: Fraction,
    cap: int | None = None,
    jobs: int = 1,
    require_both_halves: bool = False,
) -> SearchResult:
    """M ≃_ε N, searched over partitions of the direct sum linking the two inits."""
    return _sum_search("perturbed", m, n, eps, cap, jobs, require_both_halves)[1]


def decide_transitive_eps_bisimilar(
    m: Lmc,
    n: Lmc,
    eps: Fraction,
    cap: int | None = None,
    jobs: int = 1,
    require_both_halves: bool = False,
) -> SearchResult:
    """M ~_ε^* N, searched the same way as :func:`decide_perturbed_bisimilar`."""
    return _sum_search("transitive", m, n, eps, cap, jobs, require_both_halves)[1]


def certificate_json(m: Lmc, res: SearchResult) -> dict:
    """JSON document for a successful search, with rationals as strings."""
    out: dict = {"verdict": res.found, "kind": res.kind, "examined": res.examined}
    if not res.found:
        return out
    out["blocks"] = [[m.names[x] for x in b] for b in res.partition.blocks]
    cert = res.report.certificate if res.report is not None else None
    if isinstance(cert, CentroidCertificate):
        out["certificate"] = cert.to_json_for(m)
    if res.perturbation is not None:
        out["perturbation"] = {
            m.names[s]: {m.names[t]: str(q) for t, q in row.items()}
            for s, row in enumerate(res.perturbation.rows)
        }
        _, dist = apply_perturbation(m, res.perturbation)
        out["l1"] = {m.names[s]: str(d) for s, d in enumerate(dist)}
    return jsonable(out)
