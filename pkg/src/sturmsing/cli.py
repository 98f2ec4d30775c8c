"""Command-line front end.

Usage:
    sturmsing solve --p "1" --u0 0 --du0 1 --from 0 --to 3.14
    sturmsing zeros --p "1" --u0 0 --du0 1 --from 0 --to 10
    sturmsing principality --corpus lambda-family --param lam=0.25
    sturmsing verify comparison --p "lambda-family:0.25" --P "lambda-family:0.4"
    sturmsing verify separation --corpus lambda-family --param lam=0.5
    sturmsing construct schwarzian --p "0" --u "1" --interval 0,1
    sturmsing corpus list

Every command prints (or writes under --out) one JSON or CSV document that
embeds the run configuration. Exit codes: 0 success, 2 hypothesis or input
error, 3 principled refusal, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from . import corpus
from .config import RunConfig, load_config
from .construct import (
    build_comparison_counterexample,
    build_separation_counterexample,
    chuaqui_counterexample,
    steinmetz_counterexample,
)
from .errors import HypothesisError, SturmError
from .ode import ClosedForm, EquationSpec, integrate, integrate_both
from .oscillation import check_comparison, check_coefficients, check_separation, count_zeros
from .principality import principality_report

CORPUS_REF = re.compile(r"^([a-z][a-z0-9-]*):(.+)$")


# ---------------------------------------------------------------------------
# JSON / CSV emission


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to text."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def to_json(payload) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else ""
    if isinstance(v, (int, float)):
        return f"{v:.17g}"
    return str(v)


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def to_csv(payload) -> str:
    """The table with a header row when there is one, else flattened key/value pairs."""
    doc = _clean(payload)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    table = doc.get("table")
    if table:
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([_fmt(v) for v in row])
    else:
        w.writerow(["key", "value"])
        for key, value in _flatten(doc):
            w.writerow([key, _fmt(value)])
    return buf.getvalue()


def _write_atomic(path, text):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def emit(payload, cfg: RunConfig, out=None, stem="result", stream=None) -> str | None:
    text = to_json(payload) if cfg.format == "json" else to_csv(payload)
    if out:
        path = os.path.join(out, f"{stem}.{cfg.format}")
        _write_atomic(path, text)
        return path
    (stream or sys.stdout).write(text)
    return None


def _table(columns, rows):
    return {"columns": list(columns), "rows": np.asarray(rows, dtype=float).tolist()}


# ---------------------------------------------------------------------------
# resolving equations and solutions


def _params(pairs):
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise HypothesisError(f"--param expects name=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise HypothesisError(f"--param {key}: {value!r} is not a number") from None
    return out


def _interval(text, default):
    if text is None:
        return default
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise HypothesisError(f"--interval expects a,b, got {text!r}") from None
    return a, b


def _corpus_entry(name):
    try:
        return corpus.get(name)
    except KeyError as e:
        raise HypothesisError(str(e.args[0])) from None


def resolve_equation(p_text, args, default_interval=(0.0, 1.0)):
    """``(spec, entry, params)`` from ``--p``/``--corpus``/``--param``/``--interval``."""
    params = _params(getattr(args, "param", None))
    entry = None
    if p_text is None and getattr(args, "corpus", None):
        entry = _corpus_entry(args.corpus)
    elif p_text is not None:
        m = CORPUS_REF.match(p_text.strip())
        if m and m.group(1) in corpus.ENTRIES:
            entry = corpus.get(m.group(1))
            if entry.primary is None:
                raise HypothesisError(f"{entry.name} has no parameter to set")
            params = {**params, entry.primary: float(m.group(2))}
    if entry is not None:
        try:
            spec = entry.spec(params)
        except KeyError as e:
            raise HypothesisError(str(e.args[0])) from None
        return spec, entry, spec.params
    if p_text is None:
        raise HypothesisError("an equation is required: give --p or --corpus")
    a, b = _interval(getattr(args, "interval", None), default_interval)
    spec = EquationSpec(a, b, p_text, r=getattr(args, "r", None), params=params)
    return spec, None, params


def _x0(spec, cfg):
    return spec.default_x0() if cfg.x0 is None else cfg.x0


def resolve_solution(spec, entry, params, args, cfg, name_attr="solution", u_attr="u"):
    """A positive solution: ``--u``, a corpus solution, or an integrated IVP."""
    text = getattr(args, u_attr, None)
    if text:
        return ClosedForm(text, spec)
    if getattr(args, "u0", None) is not None:
        if args.du0 is None:
            raise HypothesisError("--u0 needs --du0")
        lo, hi = spec.truncated(cfg.eps, cfg.t_inf)
        return integrate_both(spec, _x0(spec, cfg), args.u0, args.du0, lo, hi, cfg.tol)
    if entry is not None:
        try:
            return entry.solution(getattr(args, name_attr, None), params)
        except KeyError as e:
            raise HypothesisError(str(e.args[0])) from None
    raise HypothesisError("a solution is required: give --u, --u0/--du0 or --corpus")


def _report(u, spec, cfg):
    return principality_report(u, spec, cfg.x0, cfg.rungs)


def _input(spec, args, **extra):
    return {"equation": spec.to_dict(), **{k: v for k, v in extra.items() if v is not None}}


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args, cfg):
    spec, entry, params = resolve_equation(args.p, args, (-math.inf, math.inf))
    start = args.start if args.start is not None else _x0(spec, cfg)
    u0, du0 = args.u0, args.du0
    if u0 is None or du0 is None:
        if entry is None:
            raise HypothesisError("solve needs --u0 and --du0 (or a corpus solution)")
        sol = entry.solution(args.solution, params)
        u0, du0 = float(sol(start)), float(sol.deriv(start))
    if args.stop is None:
        lo, hi = spec.truncated(cfg.eps, cfg.t_inf)
        traj = integrate_both(spec, start, u0, du0, lo, hi, cfg.tol)
    else:
        traj = integrate(spec, start, u0, du0, args.stop, cfg.tol)
    result = {"points": len(traj.x), "initial": {"x": start, "u": u0, "du": du0},
              "range": [traj.lo, traj.hi], "diagnostics": traj.diagnostics}
    table = _table(["x", "u", "du"], np.column_stack([traj.x, traj.u, traj.du]))
    return "solve", {"input": _input(spec, args), "result": result, "table": table}


def cmd_zeros(args, cfg):
    spec, entry, params = resolve_equation(args.p, args, (-math.inf, math.inf))
    if args.u is None and args.u0 is not None and args.stop is not None:
        start = args.start if args.start is not None else _x0(spec, cfg)
        u = integrate(spec, start, args.u0, args.du0, args.stop, cfg.tol)
    else:
        u = resolve_solution(spec, entry, params, args, cfg)
    lo, hi = spec.truncated(cfg.eps, cfg.t_inf)
    lo = args.start if args.start is not None else max(lo, u.lo)
    hi = args.stop if args.stop is not None else min(hi, u.hi)
    a, b = min(lo, hi), max(lo, hi)
    zr = count_zeros(u, a, b)
    table = _table(["index", "x"], [[i, z] for i, z in enumerate(zr.locations)]) \
        if zr.locations else None
    doc = {"input": _input(spec, args), "result": zr.to_dict()}
    if table:
        doc["table"] = table
    return "zeros", doc


def cmd_principality(args, cfg):
    spec, entry, params = resolve_equation(args.p, args)
    u = resolve_solution(spec, entry, params, args, cfg)
    rep = _report(u, spec, cfg)
    rows = [[0 if side == "left" else 1, e, i]
            for side in ("left", "right") for e, i in rep.record(side).rungs]
    doc = {"input": _input(spec, args, solution=repr(u)), "result": rep.to_dict(),
           "table": {"columns": ["endpoint", "eps", "integral"], "rows": rows}}
    return "principality", doc


def cmd_verify(args, cfg):
    spec, entry, params = resolve_equation(args.p, args)
    lo, hi = spec.truncated(cfg.eps, cfg.t_inf)
    if args.mode == "comparison":
        if args.P is None:
            raise HypothesisError("verify comparison needs --P")
        specP, entryP, paramsP = _resolve_P(args, spec)
        check_coefficients(spec, specP, lo, hi)
        u = resolve_solution(spec, entry, params, args, cfg)
        candidates = []
        if entryP is not None:
            candidates = [entryP.solution(s.name, paramsP) for s in entryP.solutions
                          if entryP.classification(s.name, paramsP) is not None]
        verdict = check_comparison(spec, specP, u, candidates=candidates,
                                   report=_report(u, spec, cfg), tol=cfg.tol,
                                   eps=cfg.eps, t_inf=cfg.t_inf)
        inputs = _input(spec, args, P=specP.to_dict(), solution=repr(u))
    else:
        u = resolve_solution(spec, entry, params, args, cfg)
        verdict = check_separation(spec, u, report=_report(u, spec, cfg), eps=cfg.eps,
                                   t_inf=cfg.t_inf)
        inputs = _input(spec, args, solution=repr(u))
    return f"verify-{args.mode}", {"input": inputs, "result": verdict.to_dict()}


def _resolve_P(args, spec):
    m = CORPUS_REF.match(args.P.strip())
    if m and m.group(1) in corpus.ENTRIES:
        specP, entryP, paramsP = resolve_equation(args.P, argparse.Namespace(param=None))
        if (specP.a, specP.b) != (spec.a, spec.b):
            raise HypothesisError("p and P must live on the same interval")
        return specP, entryP, paramsP
    return spec.with_p(args.P), None, spec.params


def cmd_construct(args, cfg):
    spec, entry, params = resolve_equation(args.p, args)
    u = resolve_solution(spec, entry, params, args, cfg)
    rep = _report(u, spec, cfg)
    kw = dict(eps=cfg.eps, t_inf=cfg.t_inf)
    if args.kind == "schwarzian":
        res = build_comparison_counterexample(spec, u, rep, **kw)
    elif args.kind == "chuaqui":
        res = chuaqui_counterexample(spec, u, rep, k=args.k, **kw)
    elif args.kind == "steinmetz":
        u2 = resolve_solution(spec, entry, params, args, cfg, "solution2", "u2") \
            if (args.u2 or args.solution2) else None
        res = steinmetz_counterexample(spec, u, rep, alpha=args.alpha, c=args.c, u2=u2, **kw)
    else:
        res = build_separation_counterexample(spec, u, rep, **kw)
    columns, rows = res.rows()
    doc = {"input": _input(spec, args, solution=repr(u)), "result": res.to_dict(grid=False),
           "table": _table(columns, rows)}
    return f"construct-{args.kind}", doc


def cmd_corpus(args, cfg):
    entries = [e.to_dict() for e in corpus.ENTRIES.values()]
    return "corpus", {"result": {"entries": entries}}


# ---------------------------------------------------------------------------
# parser


def _global_flags():
    g = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    g.add_argument("--tol", type=float, default=s, help="integration tolerance")
    g.add_argument("--eps", type=float, default=s, help="truncation distance to finite ends")
    g.add_argument("--t-inf", dest="t_inf", type=float, default=s,
                   help="truncation point for infinite ends")
    g.add_argument("--rungs", type=int, default=s, help="epsilon ladder length")
    g.add_argument("--x0", type=float, default=s, help="base point of the ratio coordinate")
    g.add_argument("--seed", type=int, default=s)
    g.add_argument("--format", choices=("json", "csv"), default=s)
    g.add_argument("--out", default=s, metavar="DIR", help="write files here instead of stdout")
    g.add_argument("--config", default=s, metavar="FILE", help="flat key = value config file")
    return g


def _equation_flags(with_P=False):
    e = argparse.ArgumentParser(add_help=False)
    e.add_argument("--p", help='coefficient p(x), or a corpus reference such as "lambda-family:0.25"')
    if with_P:
        e.add_argument("--P", help="comparison coefficient P(x), or a corpus reference")
    e.add_argument("--r", help="leading coefficient r(x) of (r u')' + p u = 0")
    e.add_argument("--interval", metavar="A,B", help="open interval (inf allowed)")
    e.add_argument("--corpus", help="use a built-in equation")
    e.add_argument("--param", action="append", metavar="NAME=VALUE", help="bind a parameter")
    e.add_argument("--u", help="closed-form positive solution u(x)")
    e.add_argument("--solution", help="name of a corpus solution")
    e.add_argument("--u0", type=float, help="initial value at --x0 (or --from)")
    e.add_argument("--du0", type=float, help="initial slope at --x0 (or --from)")
    return e


def build_parser():
    glob = _global_flags()
    eq = _equation_flags()
    eqP = _equation_flags(with_P=True)
    parser = argparse.ArgumentParser(
        prog="sturmsing", parents=[glob],
        description="Singular Sturm comparison and separation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[glob, eq], help="integrate an initial value problem")
    s.add_argument("--from", dest="start", type=float)
    s.add_argument("--to", dest="stop", type=float)
    s.set_defaults(fn=cmd_solve)

    z = sub.add_parser("zeros", parents=[glob, eq], help="count and locate zeros")
    z.add_argument("--from", dest="start", type=float)
    z.add_argument("--to", dest="stop", type=float)
    z.set_defaults(fn=cmd_zeros)

    p = sub.add_parser("principality", parents=[glob, eq], help="classify int dx/u^2 at the ends")
    p.set_defaults(fn=cmd_principality)

    v = sub.add_parser("verify", parents=[glob, eqP], help="check a singular Sturm theorem")
    v.add_argument("mode", choices=("comparison", "separation"))
    v.set_defaults(fn=cmd_verify)

    c = sub.add_parser("construct", parents=[glob, eq], help="build a counterexample")
    c.add_argument("kind", choices=("schwarzian", "chuaqui", "steinmetz", "separation"))
    c.add_argument("--k", type=float, help="cosine frequency (chuaqui)")
    c.add_argument("--alpha", type=float, default=0.5, help="exponent (steinmetz)")
    c.add_argument("--c", type=float, help="second-solution coefficient (steinmetz)")
    c.add_argument("--u2", help="closed-form second solution (steinmetz)")
    c.add_argument("--solution2", help="corpus name of the second solution (steinmetz)")
    c.set_defaults(fn=cmd_construct)

    k = sub.add_parser("corpus", parents=[glob], help="list built-in equations")
    k.add_argument("action", choices=("list",))
    k.set_defaults(fn=cmd_corpus)
    return parser


def _config(args) -> RunConfig:
    flags = {k: getattr(args, k, None) for k in ("tol", "eps", "t_inf", "rungs", "x0",
                                                 "seed", "format")}
    return load_config(getattr(args, "config", None), **flags)


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout, stderr = stdout or sys.stdout, stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        stem, doc = args.fn(args, cfg)
        payload = {"command": stem, "config": cfg.to_dict(), **doc}
        path = emit(payload, cfg, getattr(args, "out", None), stem, stdout)
        if path:
            stdout.write(path + "\n")
        return 0
    except (SturmError, OSError, ValueError) as e:
        code = getattr(e, "exit_code", 2)
        stderr.write(to_json({"error": type(e).__name__, "message": str(e), "exit_code": code}))
        return code


if __name__ == "__main__":
    sys.exit(main())
