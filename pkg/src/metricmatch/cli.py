"""Command-line front end: instance generation, matching, optimization,
validation, net inspection, and benchmarks.

Exit codes: 0 success (or matching found), 1 no matching found / metric
violations reported, 2 malformed input or invalid parameters.  All
randomness flows from --seed; identical seeds give byte-identical JSON.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import _kernels, gadgets, oracle
from .distopt import min_distortion, min_distortion_naive
from .matcher import solve_distortion
from .metric import FiniteMetric, Matching, load_metric, metric_to_json, validate_metric
from .nets import build_r_net, horizontal_edges
from .metric import Scale

__all__ = ["main"]


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(obj) -> None:
    sys.stdout.write(_dumps(obj))


def _achieved_rho(match: Matching, X: FiniteMetric, Y: FiniteMetric) -> float:
    worst = 1.0
    t = match.targets
    for i in range(len(t)):
        for j in range(i + 1, len(t)):
            ratio = Y.d(t[i], t[j]) / X.d(i, j)
            worst = max(worst, ratio, 1.0 / ratio)
    return worst


def _cmd_gen(args) -> int:
    graph = gadgets.load_graph(args.graph)
    if args.min_distortion:
        inst = gadgets.gen_min_distortion_instance(graph, args.k, args.rho)
    else:
        inst = gadgets.gen_clique_instance(graph, args.k, args.rho)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "X.json").write_text(_dumps(metric_to_json(inst.X)))
    (out / "Y.json").write_text(_dumps(metric_to_json(inst.Y)))
    manifest = {
        "pattern": "X.json",
        "space": "Y.json",
        "graph": str(args.graph),
        "k": inst.k,
        "m": inst.m,
        "rho": inst.rho,
        "min_distortion": bool(args.min_distortion),
        "lambda": inst.lam,
        "index_map": {
            "flat": "ring * m + vertex",
            "rings": inst.k,
            "ring_size": inst.m,
            "anchor": inst.k * inst.m if inst.lam is not None else None,
        },
    }
    (out / "manifest.json").write_text(_dumps(manifest))
    return 0


def _cmd_match(args) -> int:
    X = load_metric(args.pattern)
    Y = load_metric(args.space)
    result = solve_distortion(X, Y, args.rho, args.eps, want_all=args.all)
    if args.all:
        found = bool(result)
        first = result[0] if result else None
        payload = {
            "found": found,
            "matching": list(first.targets) if first else None,
            "matchings": [list(m.targets) for m in result],
            "achieved_rho": _achieved_rho(first, X, Y) if first else None,
        }
    else:
        found = result is not None
        payload = {
            "found": found,
            "matching": list(result.targets) if found else None,
            "achieved_rho": _achieved_rho(result, X, Y) if found else None,
        }
    _emit(payload)
    return 0 if found else 1


def _cmd_distort(args) -> int:
    X = load_metric(args.pattern)
    Y = load_metric(args.space)
    if args.naive:
        delta, match = min_distortion_naive(X, Y, args.eps)
    else:
        delta, match = min_distortion(X, Y, args.eps, threads=args.threads)
    _emit({"delta": delta, "matching": list(match.targets)})
    return 0


def _cmd_oracle_match(args) -> int:
    X = load_metric(args.pattern)
    Y = load_metric(args.space)
    hits = oracle.brute_rho_matchings(
        X, Y, args.rho, limit=args.limit, existence_only=not args.all
    )
    payload = {
        "found": bool(hits),
        "matching": list(hits[0].targets) if hits else None,
    }
    if args.all:
        payload["matchings"] = [list(m.targets) for m in hits]
    _emit(payload)
    return 0 if hits else 1


def _cmd_oracle_distort(args) -> int:
    X = load_metric(args.pattern)
    Y = load_metric(args.space)
    value, match = oracle.brute_min_distortion(X, Y)
    _emit({"dist": value, "matching": list(match.targets)})
    return 0


def _cmd_validate(args) -> int:
    metric = load_metric(args.metric, validate=False)
    report = validate_metric(metric)
    payload = {
        "valid": report.ok,
        "violations": [
            {"kind": v.kind, "witness": list(v.witness), "detail": v.detail}
            for v in report.issues
        ],
    }
    _emit(payload)
    return 0 if report.ok else 1


def _cmd_net_dump(args) -> int:
    Y = load_metric(args.space)
    scale = Scale(args.r_exp)
    layer = build_r_net(Y, scale.value, method=args.method)
    horizontal_edges(layer, Y, method=args.method)
    payload = {
        "r_exp": args.r_exp,
        "centers": [int(c) for c in layer.centers],
        "edges": [[u, v] for u, v in layer.edge_pairs()],
        "cover": [int(c) for c in layer.cover],
    }
    text = _dumps(payload)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _bench_instance(n: int, rng: np.random.Generator, k: int):
    pts = rng.random((n, 2))
    Y = FiniteMetric.from_points(pts)
    anchor = int(rng.integers(n))
    order = np.argsort(Y.row(anchor))
    chosen = [int(i) for i in order[:k]]  # anchor plus its nearest neighbors
    X = FiniteMetric.from_points(pts[chosen])
    return X, Y


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    rows = []
    if args.kind == "solver":
        rng = np.random.default_rng(args.seed)
        for n in sizes:
            X, Y = _bench_instance(n, rng, args.k)
            start = time.perf_counter()
            found = solve_distortion(X, Y, args.rho, args.eps)
            elapsed = time.perf_counter() - start
            rows.append({"kind": "solver", "n": n, "backend": "default",
                         "seconds": f"{elapsed:.6f}", "found": int(found is not None)})
            print(f"solver n={n}: {elapsed:.3f}s found={found is not None}")
        if len(rows) >= 2:
            t0, t1 = float(rows[-2]["seconds"]), float(rows[-1]["seconds"])
            if t0 > 0:
                print(f"growth factor {sizes[-2]} -> {sizes[-1]}: {t1 / t0:.2f}")
    else:
        rng = np.random.default_rng(args.seed)
        for n in sizes:
            pts = rng.random((n, 2))
            r = 4.0 / np.sqrt(n)
            cells = _kernels.grid_cells(pts, _kernels.cell_size_for(r))
            variants = [("numba" if _kernels.NUMBA_ACTIVE else "numpy",
                         _kernels.greedy_net_euclid)]
            if _kernels.NUMBA_ACTIVE:
                variants.append(("numpy", _kernels.greedy_net_euclid.py_func))
            for backend, fn in variants:
                fn(pts[: min(256, n)], cells[: min(256, n)], r)  # warm up / compile
                start = time.perf_counter()
                fn(pts, cells, r)
                elapsed = time.perf_counter() - start
                rows.append({"kind": "greedy_net", "n": n, "backend": backend,
                             "seconds": f"{elapsed:.6f}", "found": ""})
                print(f"greedy_net n={n} [{backend}]: {elapsed:.4f}s")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["kind", "n", "backend", "seconds", "found"])
            writer.writeheader()
            writer.writerows(rows)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricmatch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a clique-gadget instance")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--min-distortion", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("match", help="solve the relaxed matching problem")
    p.add_argument("--pattern", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--all", action="store_true")
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("distort", help="approximate the minimum distortion")
    p.add_argument("--pattern", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--naive", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_distort)

    p = sub.add_parser("oracle", help="brute-force reference solvers")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    po = osub.add_parser("match")
    po.add_argument("--pattern", required=True)
    po.add_argument("--space", required=True)
    po.add_argument("--rho", type=float, required=True)
    po.add_argument("--all", action="store_true")
    po.add_argument("--limit", type=int, default=None)
    po.set_defaults(func=_cmd_oracle_match)
    po = osub.add_parser("distort")
    po.add_argument("--pattern", required=True)
    po.add_argument("--space", required=True)
    po.set_defaults(func=_cmd_oracle_distort)

    p = sub.add_parser("validate", help="check metric axioms of an input file")
    p.add_argument("--metric", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("net-dump", help="emit one net layer as JSON")
    p.add_argument("--space", required=True)
    p.add_argument("--r-exp", type=int, required=True)
    p.add_argument("--method", default="auto", choices=["auto", "ann", "fast"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_net_dump)

    p = sub.add_parser("bench", help="wall-time benchmarks (solver or kernels)")
    p.add_argument("--kind", default="solver", choices=["solver", "kernels"])
    p.add_argument("--sizes", default="1000,10000,100000")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--rho", type=float, default=1.2)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError,
            oracle.EnumerationGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
