"""Command-line entry point: ``rlimits <command> ...``.

Every command writes one JSON report (stdout unless ``--out`` is given)
holding the resolved config, the result and an ``ok`` flag.  Reports are
serialised with sorted keys and contain nothing run-dependent apart from
the ``timestamp`` field, so identical flags reproduce identical bytes.

Exit codes: 0 when every internal check passes, 1 when a check fails
(the report is still written), 2 on a configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import graph_core as gc
from . import mfunction as mf
from . import operator_core as oc
from . import rlimit
from . import spectral
from . import tree_spherical as ts


class ConfigError(Exception):
    pass


# ------------------------------------------------------------ helpers


def _clean(x):
    """JSON-safe copy: numpy types unwrapped, non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_clean(v) for v in items]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _clean(x.real), "im": _clean(x.imag)}
    return x


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8")


def _read_json(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _positive(name, value):
    if value is None or not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _at_least(name, value, lo):
    if value is None or value < lo:
        raise ConfigError(f"{name} must be at least {lo}, got {value}")


def _parse_complex(s: str) -> complex:
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex number {s!r}") from exc


def _config(args) -> dict:
    skip = {"func", "validate"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_operator(path) -> oc.JacobiOperator:
    try:
        return oc.JacobiOperator.from_json(_read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path} does not hold an operator: {exc}") from exc


def _load_path(path, H) -> gc.PathToInfinity:
    data = _read_json(path)
    verts = data["vertices"] if isinstance(data, dict) else data
    try:
        return gc.PathToInfinity(H.graph, tuple(verts))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path} is not a path to infinity: {exc}") from exc


def _load_halfline(path) -> oc.HalfLineJacobi:
    """A half-line symbol file: ``{a, b, period}`` or a radial tree symbol ``{d, A, B}``."""
    data = _read_json(path)
    try:
        if "A" in data:
            return ts.SphericalSymbol.from_json(data).halfline()
        return oc.HalfLineJacobi.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path} is not a symbol: {exc}") from exc


def _graph_summary(g: gc.Graph) -> dict:
    degs = g.degrees()
    hist = {}
    for x in degs:
        hist[x] = hist.get(x, 0) + 1
    out = {"n": g.n, "edges": len(g.edges), "degree_histogram": hist,
           "boundary": sorted(g.boundary), "connected": g.connected()}
    if g.n <= 5000:
        out["girth"] = gc.girth(g)
    return out


# ------------------------------------------------------------ graph build


def _graph_validate(args):
    k = args.kind
    if k in ("halfline", "line"):
        _at_least("--size", args.size, 1)
    elif k in ("tree", "glued"):
        _at_least("--degree", args.degree, 3)
        _at_least("--depth", args.depth, 0)
        if k == "glued":
            _at_least("--tail", args.tail, 0)
    elif k == "counterexample":
        _at_least("--degree", args.degree, 3)
        _at_least("--blocks", args.blocks, 1)
        _at_least("--radius", args.radius, 1)
    elif k == "random-regular":
        _at_least("--degree", args.degree, 1)
        _at_least("--size", args.size, 2)
        _at_least("--girth", args.girth, 3)


def cmd_graph_build(args) -> dict:
    k = args.kind
    extra = {}
    if k == "halfline":
        g = gc.build_half_line(args.size)
    elif k == "line":
        g = gc.build_line_segment(args.size)
    elif k == "tree":
        g = gc.build_regular_tree(args.degree, args.depth)
    elif k == "glued":
        g = gc.build_glued_tree(args.degree, args.depth, args.tail)
    elif k == "counterexample":
        g, meta, path = spectral.counterexample_graph(args.degree, args.blocks, args.radius)
        extra = {"meta": meta, "path": list(path.vertices)}
    else:
        g = gc.random_regular_with_girth(args.degree, args.size, args.girth, args.seed)
    if args.save:
        gc.save_graph_json(g, args.save)
    return {"result": dict(_graph_summary(g), **extra), "ok": True}


# ------------------------------------------------------------ op


def _op_validate(args):
    if args.kind in ("adjacency", "laplacian"):
        if not args.graph:
            raise ConfigError("--graph is required for adjacency and laplacian operators")
        _read_json(args.graph)
    else:
        _at_least("--degree", args.degree, 3)
        _at_least("--depth", args.depth, 0)
        if args.symbol:
            _read_json(args.symbol)


def cmd_op(args) -> dict:
    if args.kind in ("adjacency", "laplacian"):
        g = gc.Graph.from_json(_read_json(args.graph))
        H = oc.adjacency_operator(g) if args.kind == "adjacency" else oc.laplacian_operator(g)
        extra = {}
    else:
        if args.symbol:
            try:
                sym = ts.SphericalSymbol.from_json(_read_json(args.symbol))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{args.symbol} is not a radial symbol: {exc}") from exc
        else:
            sym = ts.SphericalSymbol.random(args.degree, args.depth, args.seed)
        H = sym.operator(args.depth)
        extra = {"symbol": sym.to_json()}
    if args.save:
        _write_text(args.save, json.dumps(H.to_json()) + "\n")
    res = {"n": H.n, "edges": len(H.graph.edges), "norm_bound": H.norm_bound,
           "apply_bound": H.apply_bound, **extra}
    return {"result": res, "ok": True}


# ------------------------------------------------------------ spectrum


def _spectrum_validate(args):
    _positive("--tol", args.tol)
    _at_least("--radius", args.radius, 0)
    _at_least("--threads", args.threads, 1)
    H = _load_operator(args.op)
    bad = [c for c in args.centers if not 0 <= c < H.n]
    if bad:
        raise ConfigError(f"centers out of range: {bad}")


def cmd_spectrum(args) -> dict:
    H = _load_operator(args.op)
    approx = spectral.approx_spectrum(H, list(args.centers), args.radius, args.tol, threads=args.threads)
    if args.csv:
        _write_text(args.csv, approx.to_csv())
    res = approx.to_json()
    res["certified"] = approx.certified.tolist()
    res["histogram"] = approx.histogram(args.bins)
    return {"result": res, "ok": True}


# ------------------------------------------------------------ rlimit


def _rlimit_validate(args):
    _positive("--tol", args.tol)
    _at_least("--radius", args.radius, 1)
    _at_least("--min-witnesses", args.min_witnesses, 2)
    _at_least("--skip", args.skip, 0)
    H = _load_operator(args.op)
    _load_path(args.path, H)


def cmd_rlimit(args) -> dict:
    H = _load_operator(args.op)
    path = _load_path(args.path, H)
    germs = rlimit.detect_germs(H, path, args.radius, args.tol, args.min_witnesses, skip=args.skip)
    items = [g.to_json() for g, _ in germs]
    if args.degree:
        for item, label in zip(items, rlimit.classify_counterexample_germs(germs, args.degree)):
            item["label"] = label
    rays = rlimit.ancestors_sequence(H, path, germs)
    for item, ray in zip(items, rays):
        item["ancestor_ray"] = list(ray.ray) if ray.ray else None
    return {"result": {"germs": items, "count": len(items)}, "ok": True}


# ------------------------------------------------------------ counterexample


def _counterexample_validate(args):
    _at_least("--degree", args.degree, 3)
    _at_least("--blocks", args.blocks, 1)
    _at_least("--radius", args.radius, 1)
    _positive("--tol", args.tol)
    _positive("--eps", args.eps)
    if args.degree != 3:
        raise ConfigError("shipped cage blocks exist only for degree 3")
    if args.blocks > 4:
        raise ConfigError("at most 4 blocks are shipped beyond K4")
    if args.radius > 3:
        raise ConfigError("shipped cages support radius at most 3")


def cmd_counterexample(args) -> dict:
    rep = spectral.counterexample_experiment(args.degree, args.blocks, args.radius, tol=args.tol, eps=args.eps)
    return {"result": rep, "ok": rep["ok"]}


# ------------------------------------------------------------ spherical verify


def _spherical_validate(args):
    _at_least("--degree", args.degree, 3)
    _at_least("--depth", args.depth, 0)
    _at_least("--count", args.count, 1)
    _positive("--tol", args.tol)


def cmd_spherical_verify(args) -> dict:
    rows = []
    for s in range(args.seed, args.seed + args.count):
        sym = ts.SphericalSymbol.random(args.degree, args.depth, s)
        r = ts.verify_equivalence(sym, args.depth)
        rows.append(dict(r, seed=s))
    lhs, rhs = ts.dimension_identity(args.degree, args.depth)
    disc = max(r["discrepancy"] for r in rows)
    checks = {
        "discrepancy": bool(disc <= args.tol),
        "dimension_identity": bool(lhs == rhs and all(r["dimension_identity"] for r in rows)),
    }
    res = {"runs": rows, "max_discrepancy": disc, "dimension": [lhs, rhs], "checks": checks}
    return {"result": res, "ok": all(checks.values())}


# ------------------------------------------------------------ propa


def _propa_validate(args):
    _load_halfline(args.symbol)
    _positive("--tol", args.tol)
    _positive("--hausdorff", args.hausdorff)
    _at_least("--radius", args.radius, 1)
    _at_least("--size", args.size, 2 * args.radius + 2)
    _at_least("--window", args.window, args.radius + 1)


def cmd_propa(args) -> dict:
    j = _load_halfline(args.symbol)
    res = ts.ess_spectrum_prop_a(j, W=args.window, radius=args.radius, tol=args.tol, size=args.size)
    trunc = ts.truncation_ess_spectrum(j, size=args.size, radius=args.radius, tol=args.tol)
    h_right = spectral.hausdorff(res.right_limit_values, trunc)
    h_all = spectral.hausdorff(res.values, trunc)
    out = res.to_json()
    out.update(truncation_values=trunc.tolist(), hausdorff_right_limits=h_right, hausdorff_union=h_all)
    checks = {"hausdorff": bool(h_right <= args.hausdorff)}
    out["checks"] = checks
    return {"result": out, "ok": all(checks.values())}


# ------------------------------------------------------------ mfunction


def _mfunction_validate(args):
    _at_least("--degree", args.degree, 3)
    if args.action == "eval":
        if not args.z:
            raise ConfigError("--z is required for eval")
        for s in args.z:
            _parse_complex(s)
    else:
        eps = args.eps or []
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("--eps must be positive and strictly decreasing")


def cmd_mfunction(args) -> dict:
    d = args.degree
    if args.action == "eval":
        rows = []
        for s in args.z:
            z = _parse_complex(s)
            try:
                rows.append({"z": z, "m_halfline": mf.m_halfline(z), "m_tree": mf.m_tree(z, d),
                             "m_glued": mf.m_glued(z, d), "denominator": abs(mf.glued_denominator(z, d))})
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return {"result": {"values": rows}, "ok": True}
    rep = mf.gap_certificate(d, args.eps or None, args.depth, cross_check=not args.no_cross_check)
    if args.csv:
        _write_text(args.csv, mf.gap_table_csv(rep))
    rep["remark_probe"] = mf.remark_probe(d)
    return {"result": rep, "ok": rep["ok"]}


# ------------------------------------------------------------ pou


def _pou_validate(args):
    _at_least("--degree", args.degree, 3)
    _at_least("--L", args.L, 1)
    if args.depth is not None and args.depth <= 2 * args.L:
        raise ConfigError(f"--depth must exceed 2L = {2 * args.L}")
    _at_least("--vectors", args.vectors, 1)


def cmd_pou(args) -> dict:
    d, L = args.degree, args.L
    depth = 3 * L if args.depth is None else args.depth
    pou = ts.partition_of_unity(d, depth, L)
    cnorm = ts.commutator_norm_sectors(d, np.ones(depth), pou)
    res = {
        "depth": depth,
        "tree_size": gc.tree_size(d, depth),
        "identity_error": pou.identity_error(),
        "c2": [pou.c2.numerator, pou.c2.denominator],
        "c2_expected": [pou.c2_expected().numerator, pou.c2_expected().denominator],
        "commutator_norm": cnorm,
        "commutator_norm_L2": cnorm * L * L,
    }
    checks = {
        "identity": res["identity_error"] <= 1e-14,
        "c2": pou.c2 == pou.c2_expected(),
    }
    # vertex-level checks need the tree itself
    if res["tree_size"] <= args.max_dense:
        alpha = min(L + 2, depth)
        split = ts.subtree_split(pou, alpha)
        a = pou.alphas.index(alpha)
        split_err = float(np.max(np.abs(split.square_sum() - pou.on_vertices(a) ** 2)))
        res["subtree_split"] = {"alpha": alpha, "count": split.count,
                                "closed_form_count": split.closed_form_count, "error": split_err}
        H = ts.SphericalSymbol.constant(d, depth).operator()
        cr = ts.commutator_C(H, pou)
        slack = ts.localization_slack(H, pou, cr.C, args.vectors, args.seed)
        res.update(dense_commutator_norm=cr.norm, commutator_range=cr.max_range,
                   localization_min_slack=float(slack.min()))
        checks["subtree_split"] = split_err <= 1e-14
        checks["commutator_range"] = cr.range_ok
        checks["routes_agree"] = bool(abs(cr.norm - cnorm) <= 1e-9 * max(1.0, cnorm))
        checks["localization"] = bool(slack.min() >= -1e-9)
    res["checks"] = checks
    return {"result": res, "ok": all(checks.values())}


# ------------------------------------------------------------ parser


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    p.add_argument("--threads", type=int, default=1, help="bound on internal parallelism")
    p.add_argument("--dry-run", action="store_true", help="validate the config and stop")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rlimits", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    gp = sub.add_parser("graph", help="graph builders")
    gsub = gp.add_subparsers(dest="action", required=True)
    p = gsub.add_parser("build", help="build a graph and optionally save it")
    p.add_argument("--kind", required=True,
                   choices=["halfline", "line", "tree", "glued", "counterexample", "random-regular"])
    p.add_argument("--size", type=int)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--depth", type=int)
    p.add_argument("--tail", type=int, default=0)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--girth", type=int, default=3)
    p.add_argument("--save", help="graph JSON output path")
    _common(p)
    p.set_defaults(func=cmd_graph_build, validate=_graph_validate)

    p = sub.add_parser("op", help="build an operator")
    p.add_argument("kind", choices=["adjacency", "laplacian", "spherical"])
    p.add_argument("--graph", help="graph JSON (adjacency, laplacian)")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--symbol", help="radial symbol JSON; random from --seed if omitted")
    p.add_argument("--save", help="operator JSON output path")
    _common(p)
    p.set_defaults(func=cmd_op, validate=_op_validate)

    p = sub.add_parser("spectrum", help="residual-certified spectrum from balls")
    p.add_argument("--op", required=True)
    p.add_argument("--centers", type=int, nargs="+", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--tol", type=float, required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--csv", help="eigenvalue table output path")
    _common(p)
    p.set_defaults(func=cmd_spectrum, validate=_spectrum_validate)

    p = sub.add_parser("rlimit", help="germs of R-limits along a path")
    p.add_argument("--op", required=True)
    p.add_argument("--path", required=True, help="JSON list of path vertices")
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--min-witnesses", type=int, default=3)
    p.add_argument("--skip", type=int, default=0)
    p.add_argument("--degree", type=int, help="label germs as line, tree or glued for this degree")
    _common(p)
    p.set_defaults(func=cmd_rlimit, validate=_rlimit_validate)

    p = sub.add_parser("counterexample", help="girth-gluing spectral gap experiment")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--tol", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.5)
    _common(p)
    p.set_defaults(func=cmd_counterexample, validate=_counterexample_validate)

    sp_ = sub.add_parser("spherical", help="spherical decomposition")
    ssub = sp_.add_subparsers(dest="action", required=True)
    p = ssub.add_parser("verify", help="compare ball and sector spectra")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--count", type=int, default=1, help="number of symbols, seeds seed..seed+count-1")
    p.add_argument("--tol", type=float, default=1e-8)
    _common(p)
    p.set_defaults(func=cmd_spherical_verify, validate=_spherical_validate)

    p = sub.add_parser("propa", help="essential spectrum of a half-line from its limits")
    p.add_argument("--symbol", required=True, help="JSON {a, b, period} or {d, A, B}")
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--radius", type=int, default=80)
    p.add_argument("--tol", type=float, default=0.25)
    p.add_argument("--size", type=int, default=400)
    p.add_argument("--hausdorff", type=float, default=0.1)
    _common(p)
    p.set_defaults(func=cmd_propa, validate=_propa_validate)

    p = sub.add_parser("mfunction", help="m-functions of the half-line, tree and glued tree")
    p.add_argument("action", choices=["eval", "gap"])
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--z", nargs="+", help="complex arguments, e.g. 6 or 3+0.1j")
    p.add_argument("--eps", type=float, nargs="+", help="decreasing imaginary offsets")
    p.add_argument("--depth", type=int, help="truncation depth for the cross-check")
    p.add_argument("--no-cross-check", action="store_true")
    p.add_argument("--csv", help="(eps, Re m, Im m, |denominator|) table output path")
    _common(p)
    p.set_defaults(func=cmd_mfunction, validate=_mfunction_validate)

    p = sub.add_parser("pou", help="annular partition of unity on a tree")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--depth", type=int, help="tree depth (default 3L)")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--vectors", type=int, default=50)
    p.add_argument("--max-dense", type=int, default=20000, help="largest tree for the vertex-level checks")
    _common(p)
    p.set_defaults(func=cmd_pou, validate=_pou_validate)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    report = {"command": " ".join(x for x in (args.command, getattr(args, "action", None)) if x),
              "config": _config(args)}
    try:
        _at_least("--threads", args.threads, 1)
        args.validate(args)
        if args.dry_run:
            report.update(dry_run=True, ok=True)
            code = 0
        else:
            report.update(args.func(args))
            code = 0 if report["ok"] else 1
    except (ConfigError, ValueError) as exc:
        report.update(ok=False, error=str(exc))
        print(f"rlimits: config error: {exc}", file=sys.stderr)
        code = 2
    report["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = dumps(report)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
