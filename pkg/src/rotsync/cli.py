"""Command-line entry point.

Exit codes: 0 ok, 2 parse error, 3 quadrature failure, 4 ill-posed problem,
5 bad dimension, 6 sampler stuck. Node indices in files and on the command
line are 1-based.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from typing import Optional

import numpy as np

from . import crb as crb_mod
from .embed import embedding_csv, embedding_json, ectd_embed, node_marker_sizes
from .errors import GraphError, InvalidDimensionError, QuadratureError, RotsyncError
from .graphcore import (
    MeasurementGraph,
    build_laplacian,
    edge_weights,
    spectral_kernel,
    trace_pinv,
)
from .noise import LANGEVIN_OUTLIER, MAX_PROPOSALS, NoiseModel, QuadratureSpec, pdf, sample, weyl_integrate
from .songeom import is_rotation
from .sync import ExperimentConfig, random_graph, rows_to_csv, rows_to_json, run_experiment

EXIT_OK = 0
EXIT_PARSE = 2


# --------------------------------------------------------------------------
# Graph files


def _edge_lines(text: str) -> list:
    """1-based line number of each element of the top-level "edges" array."""
    m = re.search(r'"edges"\s*:\s*\[', text)
    if not m:
        return []
    dec = json.JSONDecoder()
    idx, lines = m.end(), []
    while True:
        while idx < len(text) and text[idx] in " \t\r\n,":
            idx += 1
        if idx >= len(text) or text[idx] == "]":
            return lines
        lines.append(text.count("\n", 0, idx) + 1)
        try:
            _, idx = dec.raw_decode(text, idx)
        except json.JSONDecodeError:
            return lines


def _int_field(obj, key, where):
    v = obj.get(key) if isinstance(obj, dict) else None
    if isinstance(v, bool) or not isinstance(v, int):
        raise GraphError(f"{where}: field {key!r} must be an integer, got {v!r}")
    return v


def _matrix(value, n, where):
    M = np.asarray(value, dtype=float)
    if M.shape == (n * n,):
        M = M.reshape(n, n)
    if M.shape != (n, n):
        raise GraphError(f"{where}: expected an {n}x{n} matrix")
    if not is_rotation(M, tol=1e-9):
        raise GraphError(f"{where}: matrix is not a rotation")
    return M


def parse_graph(text: str):
    """Parse a graph document. Returns ``(graph, truth or None)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise GraphError("graph file must contain a JSON object")
    n = _int_field(doc, "n", "graph")
    N = _int_field(doc, "nodes", "graph")
    if n < 2:
        raise InvalidDimensionError(f"n must be >= 2, got {n}")
    if N < 1:
        raise GraphError("nodes must be positive")
    anchors = doc.get("anchors", [])
    if not isinstance(anchors, list):
        raise GraphError("anchors must be a list")
    anchor_idx = []
    for a in anchors:
        if isinstance(a, bool) or not isinstance(a, int) or not 1 <= a <= N:
            raise GraphError(f"anchor {a!r} outside 1..{N}")
        if a - 1 in anchor_idx:
            raise GraphError(f"anchor {a} listed twice")
        anchor_idx.append(a - 1)
    raw_edges = doc.get("edges", [])
    if not isinstance(raw_edges, list):
        raise GraphError("edges must be a list")
    lines = _edge_lines(text)
    seen = {}
    edges = []
    for k, e in enumerate(raw_edges):
        where = f"line {lines[k]}" if k < len(lines) else f"edge {k + 1}"
        i = _int_field(e, "i", where)
        j = _int_field(e, "j", where)
        if not (1 <= i <= N and 1 <= j <= N):
            raise GraphError(f"{where}: edge ({i}, {j}) outside 1..{N}")
        if i == j:
            raise GraphError(f"{where}: self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"{where}: duplicate of the edge on {seen[key]} for pair {key}")
        seen[key] = where
        try:
            model = NoiseModel.from_json(e.get("noise"), n)
        except GraphError as exc:
            raise GraphError(f"{where}: {exc}") from None
        edges.append((i - 1, j - 1, model))
    graph = MeasurementGraph(N, tuple(edges), tuple(anchor_idx), n)
    truth = None
    if "truth" in doc:
        t = doc["truth"]
        if not isinstance(t, list) or len(t) != N:
            raise GraphError(f"truth must list {N} matrices")
        truth = np.stack([_matrix(m, n, f"truth[{r + 1}]") for r, m in enumerate(t)])
    return graph, truth


def graph_to_json(g: MeasurementGraph, truth=None) -> dict:
    doc = {
        "n": g.n,
        "nodes": g.N,
        "anchors": [a + 1 for a in g.anchors],
        "edges": [{"i": i + 1, "j": j + 1, "noise": m.to_json()} for i, j, m in g.edges],
    }
    if truth is not None:
        doc["truth"] = [np.asarray(R).reshape(-1).tolist() for R in truth]
    return doc


def _parse_pairs(spec: Optional[str], N: int) -> list:
    if not spec:
        return []
    out = []
    for tok in spec.split(","):
        m = re.fullmatch(r"\s*(\d+)\s*:\s*(\d+)\s*", tok)
        if not m:
            raise GraphError(f"bad pair {tok!r}; expected i:j")
        i, j = int(m.group(1)), int(m.group(2))
        if not (1 <= i <= N and 1 <= j <= N) or i == j:
            raise GraphError(f"pair {i}:{j} is not two distinct nodes in 1..{N}")
        out.append((i - 1, j - 1))
    return out


# --------------------------------------------------------------------------
# Shared options


def _add_graph_source(p):
    p.add_argument("graph", nargs="?", help="graph JSON file")
    r = p.add_argument_group("random graph (used when no file is given)")
    r.add_argument("--random", choices=["complete", "erdos_renyi", "clustered"])
    r.add_argument("--nodes", type=int, default=10)
    r.add_argument("--n", type=int, default=3, help="rotation dimension")
    r.add_argument("--q", type=float, default=1.0, help="edge density (erdos_renyi)")
    r.add_argument("--clusters", type=int, default=2)
    r.add_argument("--p-in", type=float, default=1.0)
    r.add_argument("--p-out", type=float, default=0.1)
    r.add_argument("--noise", default='{"kind": "langevin", "kappa": 1.0}', help="noise model JSON")
    r.add_argument("--anchor", type=int, action="append", default=[], help="1-based anchor (repeatable)")
    r.add_argument("--graph-seed", type=int, default=0)


def _load_graph(args):
    if args.graph:
        try:
            with open(args.graph) as fh:
                text = fh.read()
        except OSError as exc:
            raise GraphError(f"cannot read {args.graph}: {exc}") from None
        return parse_graph(text)
    if not getattr(args, "random", None):
        raise GraphError("give a graph file or --random")
    return _random_from_args(args), None


def _noise_from_args(args, **override):
    try:
        data = json.loads(args.noise)
    except json.JSONDecodeError as exc:
        raise GraphError(f"--noise: invalid JSON: {exc.msg}") from None
    if isinstance(data, dict):
        data = {**data, **override}
    return NoiseModel.from_json(data, args.n)


def _random_from_args(args, noise=None):
    noise = noise or _noise_from_args(args)
    return random_graph(
        args.random, args.nodes, noise, args.graph_seed, q=args.q, k=args.clusters,
        p_in=args.p_in, p_out=args.p_out, anchors=tuple(a - 1 for a in args.anchor),
    )


def _quad(args) -> QuadratureSpec:
    return QuadratureSpec(abs_tol=args.tol)


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _dumps(obj) -> str:
    # json uses the shortest repr that round-trips each double exactly
    return json.dumps(obj, indent=2, allow_nan=True)


# --------------------------------------------------------------------------
# Commands


def cmd_weights(args) -> int:
    g, _ = _load_graph(args)
    w = edge_weights(g, _quad(args))
    rows = [
        {"i": i + 1, "j": j + 1, "kind": m.kind, "kappa": m.kappa, "p": m.p, "weight": float(wk)}
        for (i, j, m), wk in zip(g.edges, w)
    ]
    _emit(rows_to_csv(rows) if args.format == "csv" else rows_to_json(rows), args.output)
    return EXIT_OK


def _common_outlier_model(g):
    models = {m for _, _, m in g.edges}
    if len(models) != 1:
        raise GraphError("--epsilon needs every edge to share one langevin_outlier model")
    m = models.pop()
    if m.kind != LANGEVIN_OUTLIER:
        raise GraphError("--epsilon needs langevin_outlier noise")
    return m


def cmd_crb(args) -> int:
    g, _ = _load_graph(args)
    spec = _quad(args)
    anchored = args.anchored if args.anchored is not None else bool(g.anchors)
    pairs = _parse_pairs(args.pairs, g.N)
    L = build_laplacian(g, spec)
    if anchored:
        report = crb_mod.crb_anchored(g, args.corrected, spec, L)
        if pairs:
            raise GraphError("--pairs is only available with --anchor-free")
    else:
        report = crb_mod.crb_anchorfree(g, args.corrected, spec, L)
    out = report.to_dict(pairs)
    if args.epsilon is not None:
        m = _common_outlier_model(g)
        w = float(L.weights[0])
        unit_trace = trace_pinv(spectral_kernel(L)) * w
        out["outlier_threshold"] = {
            "epsilon": args.epsilon,
            "kappa": m.kappa,
            "p_formula": crb_mod.outlier_threshold(g.n, m.kappa, args.epsilon, g.N, g.M, spec),
            "p_trace": crb_mod.required_inlier_probability(unit_trace, g.N, g.n, m.kappa, args.epsilon, spec),
            "unit_trace": unit_trace,
        }
    _emit(_dumps(out), args.output)
    return EXIT_OK


def _parse_sweep(spec: Optional[str]):
    if not spec:
        return None, []
    m = re.fullmatch(r"\s*(kappa|p)\s*=\s*(.+)", spec)
    if not m:
        raise GraphError(f"bad --sweep {spec!r}; expected kappa=v1,v2,... or p=v1,v2,...")
    try:
        values = [float(v) for v in m.group(2).split(",")]
    except ValueError:
        raise GraphError(f"bad --sweep values in {spec!r}") from None
    return m.group(1), values


def cmd_simulate(args) -> int:
    param, values = _parse_sweep(args.sweep)
    spec = _quad(args)
    if param and args.graph:
        raise GraphError("--sweep works with --random graphs only")
    g, _ = _load_graph(args)
    pairs = tuple(_parse_pairs(args.pairs, g.N))
    anchored = args.anchored if args.anchored is not None else bool(g.anchors)
    config = ExperimentConfig(
        trials=args.trials, seed=args.seed, estimator=args.estimator, anchored=anchored,
        corrected=args.corrected, pairs=pairs, noiseless=args.noiseless,
    )
    rows = []
    for v in values or [None]:
        graph = g if v is None else _random_from_args(args, _noise_from_args(args, **{param: v}))
        res = run_experiment(graph, config, spec, with_crb=True)
        row = {} if v is None else {param: v}
        row.update({
            "crb_total": float(res.crb.total),
            "emp_mse": res.emp_total,
            "emp_stderr": res.emp_stderr,
            "baseline": res.baseline,
        })
        rows.append(row)
    text = rows_to_csv(rows) if args.format == "csv" else rows_to_json(rows)
    _emit(text, args.output)
    return EXIT_OK


def cmd_embed(args) -> int:
    g, _ = _load_graph(args)
    spec = _quad(args)
    anchored = args.anchored if args.anchored is not None else bool(g.anchors)
    L = build_laplacian(g, spec)
    sizes = None
    if anchored:
        report = crb_mod.crb_anchored(g, False, spec, L)
        sizes = node_marker_sizes(report)
        k = report.kernel
    else:
        k = spectral_kernel(L)
    emb = ectd_embed(k, args.dim)
    if args.format == "csv":
        text = f"# explained_ratio={emb.explained_ratio!r}\n" + embedding_csv(emb, sizes)
    else:
        text = embedding_json(emb, sizes)
    _emit(text, args.output)
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        data = json.loads(args.model)
    except json.JSONDecodeError as exc:
        raise GraphError(f"--model: invalid JSON: {exc.msg}") from None
    if args.n < 2:
        raise InvalidDimensionError(f"n must be >= 2, got {args.n}")
    if args.count < 0:
        raise GraphError("--count must be >= 0")
    model = NoiseModel.from_json(data, args.n)
    rng = np.random.default_rng(args.seed)
    if args.count:
        Z = sample(model, rng, size=args.count, max_proposals=args.max_proposals)
    else:
        Z = np.zeros((0, args.n, args.n))
    tr = np.trace(Z, axis1=-2, axis2=-1)
    summary = {"count": args.count, "n": args.n, "model": model.to_json()}
    if args.count:
        summary["mean_trace"] = float(tr.mean())
        summary["stderr_trace"] = float(tr.std(ddof=1) / np.sqrt(args.count)) if args.count > 1 else None
    if args.n <= 4:
        spec = _quad(args)
        mass = weyl_integrate(args.n, lambda R: pdf(model, R), spec, vectorized=True)
        if not abs(mass - 1.0) < 1e-6:
            raise QuadratureError(f"density integrates to {mass!r} instead of 1; the peak is too narrow to resolve")
        summary["predicted_mean_trace"] = weyl_integrate(
            args.n, lambda R: np.trace(R, axis1=-2, axis2=-1) * pdf(model, R), spec, vectorized=True
        )
    doc = {"summary": summary, "rotations": [R.reshape(-1).tolist() for R in Z]}
    _emit(_dumps(doc), args.output)
    return EXIT_OK


def _anchored_flags(p):
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--anchored", dest="anchored", action="store_true", default=None)
    grp.add_argument("--anchor-free", dest="anchored", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotsync", description="Cramer-Rao bounds for synchronization of rotations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=("json", "csv"), default="json"):
        p.add_argument("--tol", type=float, default=1e-10, help="absolute quadrature tolerance")
        p.add_argument("-o", "--output", help="write to this file instead of stdout")
        p.add_argument("--format", choices=fmt, default=default)

    p = sub.add_parser("weights", help="information weight of every edge")
    _add_graph_source(p)
    common(p, default="csv")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("crb", help="Cramer-Rao bound report")
    _add_graph_source(p)
    common(p, fmt=("json",))
    _anchored_flags(p)
    p.add_argument("--corrected", action="store_true", help="include curvature terms (n = 2, 3)")
    p.add_argument("--pairs", help="comma-separated 1-based pairs i:j (anchor-free)")
    p.add_argument("--epsilon", type=float, help="also report the inlier probability needed for RMS accuracy epsilon")
    p.set_defaults(func=cmd_crb)

    p = sub.add_parser("simulate", help="Monte Carlo error of the spectral estimator against the bound")
    _add_graph_source(p)
    common(p, default="csv")
    _anchored_flags(p)
    p.add_argument("--corrected", action="store_true")
    p.add_argument("--pairs")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimator", choices=["eig"], default="eig")
    p.add_argument("--noiseless", action="store_true", help="draw measurements without noise")
    p.add_argument("--sweep", help="kappa=v1,v2,... or p=v1,v2,... (random graphs)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed", help="commute-time embedding for plotting")
    _add_graph_source(p)
    common(p, default="csv")
    _anchored_flags(p)
    p.add_argument("--dim", type=int, default=2)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sample", help="draw rotations from a noise model")
    p.add_argument("--model", required=True, help='noise model JSON, e.g. {"kind": "langevin", "kappa": 2}')
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-proposals", type=int, default=MAX_PROPOSALS, help="rejection sampler budget (n >= 4)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_PARSE
    try:
        return args.func(args)
    except RotsyncError as exc:
        print(f"rotsync: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"rotsync: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
