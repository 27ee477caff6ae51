"""Command-line front end.

Exit codes: 0 verdict true or success, 1 verdict false, 2 usage or input
error, 3 search cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import generators
from .approx_bisim import (
    exact_bisimilarity,
    greatest_eps_bisimilarity,
    is_eps_apb,
    is_eps_bisimulation,
    is_transitive_eps_bisimulation,
    up_to_bisimilarity,
)
from .bounds import FLAVORS, describe, finite_horizon_report, goal_traces, label_f_closure, unbounded_report
from .lmc_core import (
    EXACT,
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
from .perturbed import (
    certificate_json,
    is_eps_perturbed_bisimulation,
    search_partitions,
    synthesize_perturbation,
)
from .relations import (
    Relation,
    SearchCapExceeded,
    format_partition,
    format_relation,
    parse_partition,
    parse_relation,
)
from .reports import CheckReport, jsonable
from .weak_branching import (
    MrRejection,
    build_mr,
    build_mw,
    greatest_weak_eps_bisimilarity,
    is_branching_eps_bisimulation,
    is_weak_eps_bisimulation,
)

OK, FALSE, ERROR, CAP = 0, 1, 2, 3


class _Out:
    """Collects either JSON fields or text lines, then prints once."""

    def __init__(self, as_json: bool) -> None:
        self.as_json = as_json
        self.data: dict = {}
        self.lines: list[str] = []

    def text(self, line: str) -> None:
        self.lines.append(line)

    def put(self, key: str, value) -> None:
        self.data[key] = value

    def flush(self) -> None:
        if self.as_json:
            print(json.dumps(jsonable(self.data), indent=2, ensure_ascii=False))
        elif self.lines:
            print("\n".join(self.lines))


# ------------------------------------------------------------------ inputs


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise LmcError(f"cannot read {path}: {exc.strerror}") from None


def _load(path: str) -> Lmc:
    try:
        return parse_lmc(_read(path))
    except LmcError as exc:
        raise LmcError(f"{path}: {exc}") from None


def _load_model(files: Sequence[str]) -> tuple[Lmc, int | None]:
    """One model, or the direct sum of two; the second value is the right init."""
    m, right, _ = _load_split(files)
    return m, right


def _load_split(files: Sequence[str]) -> tuple[Lmc, int | None, int]:
    """Like :func:`_load_model`, also returning the size of the left model."""
    if len(files) == 1:
        m = _load(files[0])
        return m, None, m.n
    if len(files) != 2:
        raise LmcError("expected one or two model files")
    left, right = _load(files[0]), _load(files[1])
    return direct_sum(left, right), right.init + left.n, left.n


def _pair(m: Lmc, names: Sequence[str] | None, right_init: int | None) -> tuple[int, int] | None:
    if names:
        return m.index(names[0]), m.index(names[1])
    if right_init is not None:
        return m.init, right_init
    return None


def _rat(text: str) -> Fraction:
    try:
        return parse_rat(text)
    except LmcError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise LmcError(f"cannot write {path}: {exc.strerror}") from None


def _parse_rows(text: str, m: Lmc) -> Perturbation:
    """Replacement rows as ``s -> t : p`` lines; unmentioned states keep their row."""
    given: dict[int, dict[int, Fraction]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            head, prob = line.rsplit(":", 1)
            src, dst = (x.strip() for x in head.split("->"))
            given.setdefault(m.index(src), {})[m.index(dst)] = parse_rat(prob.strip())
        except (ValueError, LmcError) as exc:
            raise LmcError(f"line {lineno}: {exc}") from None
    return Perturbation(tuple(given.get(s, m.rows[s]) for s in range(m.n)))


# --------------------------------------------------------------- reporting


def _report(out: _Out, rep: CheckReport) -> int:
    out.data.update(rep.to_json())
    out.text(f"{rep.check}: {'yes' if rep.ok else 'no'}")
    if rep.message:
        out.text(f"  {rep.message}")
    return OK if rep.ok else FALSE


def _verdict(out: _Out, m: Lmc, pair: tuple[int, int], rel_has: bool, what: str) -> int:
    s, t = pair
    out.put("pair", [m.names[s], m.names[t]])
    out.put("verdict", rel_has)
    out.text(f"{m.names[s]} {what} {m.names[t]}: {'yes' if rel_has else 'no'}")
    return OK if rel_has else FALSE


def _relation_out(out: _Out, m: Lmc, r: Relation) -> None:
    out.put("relation", [[m.names[i], m.names[j]] for i, j in r.sorted_pairs()])
    text = format_relation(r, m).rstrip("\n")
    out.text(text if text else "(identity only)")


def _emit(path: str | None, m: Lmc) -> None:
    if path:
        _write(path, serialize_lmc(m))


# ---------------------------------------------------------------- commands


def cmd_validate(a, out: _Out) -> int:
    m = _load(a.file)
    out.put("verdict", True)
    out.put("states", m.n)
    out.put("init", m.names[m.init])
    out.put("transitions", sum(len(r) for r in m.rows))
    out.text(f"ok: {m.n} states, {out.data['transitions']} transitions, init {m.names[m.init]}")
    return OK


def cmd_bisim(a, out: _Out) -> int:
    m, right = _load_model(a.files)
    p = exact_bisimilarity(m)
    pair = _pair(m, a.pair, right)
    out.put("blocks", [[m.names[x] for x in b] for b in p.blocks])
    if pair is not None:
        return _verdict(out, m, pair, p.same_block(*pair), "~")
    out.text(format_partition(p, m).rstrip("\n"))
    return OK


def cmd_eps_bisim(a, out: _Out) -> int:
    m, right = _load_model(a.files)
    pair = _pair(m, a.pair, right)
    if a.relation:
        return _report(out, is_eps_bisimulation(m, parse_relation(_read(a.relation), m), a.eps))
    r = greatest_eps_bisimilarity(m, a.eps)
    if pair is not None:
        out.put("eps", a.eps)
        return _verdict(out, m, pair, pair in r, f"~_{a.eps}")
    _relation_out(out, m, r)
    return OK


def cmd_upto(a, out: _Out) -> int:
    m, right = _load_model(a.files)
    r = up_to_bisimilarity(m, a.eps, a.n)
    pair = _pair(m, a.pair, right)
    out.put("eps", a.eps)
    out.put("n", a.n)
    if pair is not None:
        return _verdict(out, m, pair, pair in r, f"~_{a.eps}^{a.n}")
    _relation_out(out, m, r)
    return OK


def cmd_apb(a, out: _Out) -> int:
    m = _load(a.file)
    return _report(out, is_eps_apb(m, parse_relation(_read(a.relation), m), a.eps))


def cmd_check_partition(a, out: _Out) -> int:
    m = _load(a.file)
    p = parse_partition(_read(a.partition), m, fill=True)
    if a.kind == "transitive":
        rep = is_transitive_eps_bisimulation(m, p, a.eps)
    elif a.kind == "perturbed":
        rep = is_eps_perturbed_bisimulation(m, p, a.eps)
        if rep:
            cert = rep.certificate
            out.put("certificate", cert.to_json_for(m))
            pert = synthesize_perturbation(m, cert)
            out.put("perturbation", {
                m.names[s]: {m.names[t]: q for t, q in row.items()} for s, row in enumerate(pert.rows)
            })
            rep = CheckReport(True, rep.check)
    else:
        rep = is_branching_eps_bisimulation(m, p, a.eps)
        if a.emit_transformed:
            mr = build_mr(m, p, a.eps)
            if isinstance(mr, MrRejection):
                raise LmcError(f"cannot build M_R: {mr.message}")
            _emit(a.emit_transformed, mr.lmc)
    return _report(out, rep)


def cmd_weak_check(a, out: _Out) -> int:
    m = _load(a.file)
    r = parse_relation(_read(a.relation), m)
    if a.emit_transformed:
        _emit(a.emit_transformed, build_mw(m).lmc)
    return _report(out, is_weak_eps_bisimulation(m, r, a.eps, cap=a.cap))


def cmd_weak_greatest(a, out: _Out) -> int:
    m, right = _load_model(a.files)
    if a.emit_transformed:
        _emit(a.emit_transformed, build_mw(m).lmc)
    r = greatest_weak_eps_bisimilarity(m, a.eps, cap=a.cap)
    pair = _pair(m, a.pair, right)
    if pair is not None:
        return _verdict(out, m, pair, pair in r, f"≈^w_{a.eps}")
    _relation_out(out, m, r)
    return OK


def cmd_decide(a, out: _Out) -> int:
    m, right, split = _load_split(a.files)
    pair = _pair(m, a.pair, right)
    if pair is None:
        raise LmcError("decide needs --pair or two model files")
    delta = a.eps if a.delta_probe is None else a.delta_probe
    accept = None
    if right is not None and a.require_both_halves:
        accept = _spans(split)
    res = search_partitions(m, a.kind, delta, [pair], a.cap, a.jobs, accept)
    doc = certificate_json(m, res)
    doc["pair"] = [m.names[pair[0]], m.names[pair[1]]]
    doc["tolerance"] = str(delta)
    if a.delta_probe is not None:
        doc["eps_bisimilar"] = pair in greatest_eps_bisimilarity(m, a.eps)
        doc["eps"] = str(a.eps)
    out.data.update(doc)
    s, t = (m.names[x] for x in pair)
    out.text(f"{a.kind} at {delta}: {s}, {t} {'related' if res else 'not related'}")
    out.text(f"  partitions examined: {res.examined}")
    if "eps_bisimilar" in doc:
        out.text(f"  ~_{a.eps}: {'yes' if doc['eps_bisimilar'] else 'no'}")
    if res:
        out.text("  blocks: " + " ".join("{" + ", ".join(b) + "}" for b in doc["blocks"]))
        for name, row in doc.get("perturbation", {}).items():
            cells = ", ".join(f"{k}: {v}" for k, v in row.items())
            out.text(f"  {name}' = {{{cells}}}  (L1 {doc['l1'][name]})")
    return OK if res else FALSE


def _spans(split: int):
    return lambda block: block[0] < split <= block[-1]


def cmd_quotient(a, out: _Out) -> int:
    m = _load(a.file)
    p = parse_partition(_read(a.partition), m) if a.partition else exact_bisimilarity(m)
    if a.policy == "centroid":
        if a.eps is None:
            raise LmcError("the centroid policy needs --eps")
        policy = Centroid(a.eps)
    else:
        policy = EXACT
    q = quotient(m, p, policy)
    text = serialize_lmc(q)
    if a.output:
        _write(a.output, text)
        out.text(f"wrote {a.output}: {q.n} states")
    else:
        out.lines.append(text.rstrip("\n"))
    out.put("verdict", True)
    out.put("lmc", text)
    return OK


def cmd_perturb(a, out: _Out) -> int:
    m = _load(a.file)
    if a.partition:
        if a.eps is None:
            raise LmcError("synthesis needs --eps")
        p = parse_partition(_read(a.partition), m)
        rep = is_eps_perturbed_bisimulation(m, p, a.eps)
        if not rep:
            return _report(out, rep)
        pert = synthesize_perturbation(m, rep.certificate)
    elif a.rows:
        pert = _parse_rows(_read(a.rows), m)
    else:
        raise LmcError("perturb needs --rows or --partition")
    new, dist = apply_perturbation(m, pert)
    ok = a.eps is None or all(d <= a.eps for d in dist)
    text = serialize_lmc(new)
    if a.output:
        _write(a.output, text)
    out.put("verdict", ok)
    out.put("l1", {m.names[s]: d for s, d in enumerate(dist)})
    out.put("lmc", text)
    out.text(f"max L1 distance: {max(dist)}")
    if a.eps is not None:
        out.text(f"within {a.eps}: {'yes' if ok else 'no'}")
    if not a.output:
        out.text(text.rstrip("\n"))
    return OK if ok else FALSE


def cmd_bounds(a, out: _Out) -> int:
    m = _load(a.file)
    if a.f_close:
        m = label_f_closure(m, a.goal, a.f)
    s, t = m.index(a.pair[0]), m.index(a.pair[1])
    if a.flavor == "finite":
        if a.k is None:
            raise LmcError("the finite flavor needs --k")
        rep = finite_horizon_report(m, s, t, sorted(goal_traces(m, a.k, a.goal), key=repr), a.eps)
    else:
        p = parse_partition(_read(a.partition), m) if a.partition else None
        rep = unbounded_report(m, s, t, a.eps, a.flavor, p, a.goal, a.f)
    out.data.update(rep.to_json())
    out.text(describe(rep))
    return OK if rep.holds else FALSE


_GEN_PARAMS = ("n", "eps", "p", "delta", "eps1", "eps2", "set", "target")


def cmd_gen(a, out: _Out) -> int:
    params = {k: getattr(a, k) for k in _GEN_PARAMS if getattr(a, k) is not None}
    fam = generators.FAMILIES.get(a.family)
    if fam is None:
        raise LmcError(f"unknown family {a.family!r}; known: {', '.join(sorted(generators.FAMILIES))}")
    built = generators.gen(a.family, **params)
    models = built if fam.outputs else (built,)
    if not a.output:
        if len(models) != 1:
            raise LmcError(f"family {a.family} writes {len(models)} files; give -o")
        out.lines.append(serialize_lmc(models[0]).rstrip("\n"))
        out.put("lmc", serialize_lmc(models[0]))
        return OK
    paths = [a.output] if not fam.outputs else [_suffixed(a.output, s) for s in fam.outputs]
    for path, model in zip(paths, models):
        _write(path, serialize_lmc(model))
        out.text(f"wrote {path}: {model.n} states")
    out.put("files", paths)
    return OK


def _suffixed(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{suffix}{p.suffix or '.lmc'}"))


def cmd_reduce_subsetsum(a, out: _Out) -> int:
    inst = generators.SubsetSumInstance(tuple(a.set), a.target)
    m, n, eps = generators.subsetsum(a.set, a.target)
    out.put("eps", eps)
    out.put("solvable", inst.solvable())
    out.text(f"reduction tolerance: {eps}")
    out.text(f"subset sum solvable: {'yes' if inst.solvable() else 'no'}")
    if a.output:
        for suffix, model in (("M", m), ("N", n)):
            path = _suffixed(a.output, suffix)
            _write(path, serialize_lmc(model))
            out.text(f"wrote {path}: {model.n} states")
    if not a.decide:
        return OK
    total = direct_sum(m, n)
    res = search_partitions(total, "perturbed", eps, [(m.init, n.init + m.n)], a.cap, a.jobs)
    agree = bool(res) == inst.solvable()
    out.put("verdict", bool(res))
    out.put("agrees", agree)
    out.text(f"M ≃_{eps} N: {'yes' if res else 'no'} (agrees with brute force: {'yes' if agree else 'no'})")
    if not agree:
        raise AssertionError("reduction disagrees with the brute-force subset-sum check")
    return OK if res else FALSE


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--cap", type=int, default=None, help="override the search cap")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for partition search")

    parser = argparse.ArgumentParser(prog="abstool", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def eps(p, required: bool = True) -> None:
        p.add_argument("--eps", type=_rat, required=required)

    def pair(p) -> None:
        p.add_argument("--pair", nargs=2, metavar=("S", "T"))

    p = add("validate", cmd_validate, "parse and validate a model file")
    p.add_argument("file")

    p = add("bisim", cmd_bisim, "exact bisimilarity")
    p.add_argument("files", nargs="+")
    pair(p)

    p = add("eps-bisim", cmd_eps_bisim, "check or compute ε-bisimilarity")
    p.add_argument("files", nargs="+")
    eps(p)
    pair(p)
    p.add_argument("--relation")

    p = add("upto", cmd_upto, "up-to-n ε-bisimilarity")
    p.add_argument("files", nargs="+")
    eps(p)
    p.add_argument("--n", type=int, required=True)
    pair(p)

    p = add("apb", cmd_apb, "check an ε-APB relation")
    p.add_argument("file")
    eps(p)
    p.add_argument("--relation", required=True)

    p = add("check-partition", cmd_check_partition, "check a given partition")
    p.add_argument("file")
    eps(p)
    p.add_argument("--kind", choices=("transitive", "perturbed", "branching"), required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--emit-transformed", metavar="OUT", help="write M_R (branching only)")

    p = add("weak-check", cmd_weak_check, "check a weak ε-bisimulation")
    p.add_argument("file")
    eps(p)
    p.add_argument("--relation", required=True)
    p.add_argument("--emit-transformed", metavar="OUT", help="write M^w")

    p = add("decide", cmd_decide, "search for a relating partition")
    p.add_argument("files", nargs="+")
    eps(p)
    p.add_argument("--kind", choices=("perturbed", "transitive", "branching"), required=True)
    p.add_argument("--delta-probe", type=_rat, help="search tolerance; --eps is then also checked as ~_ε")
    p.add_argument("--require-both-halves", action="store_true")
    pair(p)

    p = add("weak-greatest", cmd_weak_greatest, "greatest weak ε-bisimilarity")
    p.add_argument("files", nargs="+")
    eps(p)
    pair(p)
    p.add_argument("--emit-transformed", metavar="OUT", help="write M^w")

    p = add("quotient", cmd_quotient, "quotient by a partition")
    p.add_argument("file")
    p.add_argument("--partition")
    p.add_argument("--policy", choices=("exact", "centroid"), default="exact")
    eps(p, required=False)
    p.add_argument("-o", "--output")

    p = add("perturb", cmd_perturb, "apply or synthesize a perturbation")
    p.add_argument("file")
    p.add_argument("--rows", help="replacement rows as 's -> t : p' lines")
    p.add_argument("--partition", help="synthesize from a perturbed-bisimulation partition")
    eps(p, required=False)
    p.add_argument("-o", "--output")

    p = add("bounds", cmd_bounds, "reachability bound report")
    p.add_argument("file")
    p.add_argument("--pair", nargs=2, metavar=("S", "T"), required=True)
    eps(p)
    p.add_argument("--flavor", choices=FLAVORS + ("finite",), default="step")
    p.add_argument("--goal", default="g")
    p.add_argument("--f", default="f", help="proposition marking states that cannot reach the goal")
    p.add_argument("--f-close", action="store_true", help="add the f proposition before checking")
    p.add_argument("--partition")
    p.add_argument("--k", type=int, help="horizon for the finite flavor")

    p = add("gen", cmd_gen, "write a generated model family")
    p.add_argument("family")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=_rat)
    p.add_argument("--p", type=_rat)
    p.add_argument("--delta", type=_rat)
    p.add_argument("--eps1", type=_rat)
    p.add_argument("--eps2", type=_rat)
    p.add_argument("--set", type=_int_list)
    p.add_argument("--target", type=int)
    p.add_argument("-o", "--output")

    p = add("reduce-subsetsum", cmd_reduce_subsetsum, "build the SubsetSum reduction")
    p.add_argument("--set", type=_int_list, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--decide", action="store_true", help="also decide ≃_ε and compare with brute force")
    p.add_argument("-o", "--output")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ERROR if exc.code else OK
    out = _Out(args.json)
    try:
        code = args.func(args, out)
    except SearchCapExceeded as exc:
        return _fail(out, str(exc), CAP)
    except LmcError as exc:
        return _fail(out, str(exc), ERROR)
    out.flush()
    return code


def _fail(out: _Out, message: str, code: int) -> int:
    if out.as_json:
        print(json.dumps({"error": message, "exit": code}, indent=2, ensure_ascii=False))
    else:
        print(f"error: {message}", file=sys.stderr)
    return code
