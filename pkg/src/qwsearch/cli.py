"""Command-line interface.

    qwsearch gen ba --n 697 --m-attach 3 --seed 7
    qwsearch renorm --graph s1.edges --embedding s1.embedding.csv --layers 2
    qwsearch search --graph layer1.edges --sample 200 --seed 3
    qwsearch analyze --scaling l1.csv l2.csv l3.csv

Output files go to ``--outdir``, which defaults to ``$QWSEARCH_OUTDIR`` or the
working directory. ``--config FILE`` reads a flat JSON object whose keys are
flag names (``tol-f`` or ``tol_f``); flags given on the command line win.

Exit codes: 0 ok, 1 usage or input error, 2 numerical failure, 3 some
targets of a campaign failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (degree_class_average, fit_hub_linear, fit_scaling, hub_time_slope,
                       layer_stats, percentile_filter)
from .dynamics import NumericalError, SearchHamiltonian, target_amplitudes, uniform_state
from .files import (SUMMARY_COLUMNS, SchemaError, derive_seed, read_records, write_csv,
                    write_json, write_records, write_records_json)
from .geometry import (EmbeddingError, export_embedding, gen_s1, h2_radial, import_embedding,
                       prune, read_embedding, renormalize, write_block_map)
from .graph import (EdgeListError, GenerationError, Graph, gen_ba, gen_complete, gen_er,
                    gen_star, giant_component, read_edge_list, write_edge_list)
from .search import SearchOptions, search_all
from .spectral import ConvergenceError, approx_optimum, overlap_gap_curve

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
OUTDIR_ENV = "QWSEARCH_OUTDIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def _outdir(args) -> Path:
    d = Path(args.outdir or os.environ.get(OUTDIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _notice(msg):
    print(f"notice: {msg}", file=sys.stderr)


def _load_graph(path):
    """Giant component of an edge-list file plus the file ids of its nodes."""
    g, labels = read_edge_list(path)
    if not g.is_connected():
        gc, cmap = giant_component(g)
        _notice(f"{path}: graph is disconnected; using the giant component "
                f"({gc.n} of {g.n} nodes, {cmap.dropped_count} dropped)")
        return gc, labels[cmap.kept_nodes]
    return g, labels


def _targets(labels, spec) -> np.ndarray:
    """Internal ids for a comma-separated list of file ids."""
    index = {int(x): i for i, x in enumerate(labels)}
    out = []
    for tok in str(spec).split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(index[int(tok)])
        except (KeyError, ValueError):
            raise UsageError(f"target {tok!r} is not a node of the (giant component of the) graph") from None
    return np.array(sorted(set(out)), dtype=np.int64)


def _summary(g: Graph) -> str:
    return f"N={g.n} m={g.m} <k>={g.avg_degree:.4f}"


def _sub_seed(args, stage, counter=0):
    return None if args.seed is None else derive_seed(args.seed, stage, counter)


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    out = _outdir(args)
    kind = args.kind
    seed = _sub_seed(args, f"gen-{kind}")
    emb = None
    if kind == "ba":
        g = gen_ba(args.n, args.m_attach, seed)
    elif kind == "er":
        if args.m is None:
            raise UsageError("gen er needs --m")
        g = gen_er(args.n, args.m, seed)
    elif kind == "s1":
        g, emb = gen_s1(args.n, args.gamma_pl, args.beta, args.avg_k, seed)
    elif kind == "complete":
        g = gen_complete(args.n)
    else:
        g = gen_star(args.n)
    name = args.name or f"{kind}_n{args.n}" + ("" if args.seed is None else f"_s{args.seed}")
    path = out / f"{name}.edges"
    write_edge_list(g, path, comment=f"{kind} n={args.n} seed={args.seed}")
    print(f"wrote {path}")
    if emb is not None:
        epath = out / f"{name}.embedding.csv"
        export_embedding(emb, epath)
        print(f"wrote {epath}")
        if g.degrees.min() == 0:
            _notice(f"{int(np.sum(g.degrees == 0))} isolated nodes are absent from the edge list")
    print(_summary(g))
    return EXIT_OK


def cmd_import_embedding(args) -> int:
    g, labels = read_edge_list(args.graph)
    emb = import_embedding(args.coords, labels=labels)
    if args.beta is not None or args.mu is not None:
        emb = type(emb)(emb.theta, emb.kappa, args.beta or emb.beta, args.mu or emb.mu)
    out = _outdir(args) / (args.name or f"{Path(args.graph).stem}.embedding.csv")
    export_embedding(emb, out, labels=labels)
    print(f"wrote {out} ({emb.n} nodes, beta={emb.beta:g}, mu={emb.mu:g})")
    return EXIT_OK


def cmd_renorm(args) -> int:
    if not args.embedding:
        raise UsageError("renorm needs node coordinates: pass --embedding, or convert "
                         "Mercator output with 'qwsearch import-embedding' first")
    g0, labels = read_edge_list(args.graph)
    emb = import_embedding(args.embedding, labels=labels)
    g, cmap = giant_component(g0)
    if cmap.dropped_count:
        _notice(f"layer 0: using the giant component ({g.n} of {g0.n} nodes)")
    emb = emb.subset(cmap.kept_nodes)
    labels = labels[cmap.kept_nodes]
    out = _outdir(args)
    stem = args.name or Path(args.graph).stem
    target = args.target_avg_k or g.avg_degree
    rows = [(0, g.n, g.m, g.avg_degree, emb.mu, float("nan"))]
    for layer in range(1, args.layers + 1):
        rr = renormalize(g, emb, r=args.r, layer=layer - 1)
        pr = prune(rr.graph, rr.embedding, min(target, rr.graph.avg_degree),
                   seed=_sub_seed(args, "prune", layer))
        # block map in terms of the previous layer's ids, restricted to surviving supernodes
        blocks = [rr.block_map[i] for i in pr.components.kept_nodes]
        if layer == 1:
            blocks = [labels[b] for b in blocks]
        g, emb = pr.graph, pr.embedding
        write_edge_list(g, out / f"{stem}.l{layer}.edges", comment=f"layer {layer} of {args.graph}")
        export_embedding(emb, out / f"{stem}.l{layer}.embedding.csv")
        write_block_map(blocks, out / f"{stem}.l{layer}.blocks.json", layer=layer, r=args.r)
        rows.append((layer, g.n, g.m, g.avg_degree, emb.mu, pr.mu_pruned))
        print(f"layer {layer}: {_summary(g)}")
        if args.target_mode == "previous":
            target = g.avg_degree
    spath = out / f"{stem}.renorm.csv"
    write_csv(spath, ("layer", "n", "m", "avg_k", "mu", "mu_pruned"), rows)
    print(f"wrote {spath}")
    return EXIT_OK


def _search_options(args) -> SearchOptions:
    return SearchOptions(tol_f=args.tol_f, tol_x=args.tol_x, max_iter=args.max_iter,
                         t_horizon_factor=args.t_horizon_factor, evolve_tol=args.evolve_tol,
                         backend=args.backend, target_sample=args.sample,
                         sample_seed=_sub_seed(args, "sample"))


def cmd_search(args) -> int:
    g, labels = _load_graph(args.graph)
    opts = _search_options(args)
    if args.sample is not None and args.seed is None:
        raise UsageError("--sample needs --seed for a reproducible target set")
    targets = _targets(labels, args.targets) if args.targets else None
    t0 = time.time()
    res = search_all(g, targets, opts, threads=args.threads)
    out = _outdir(args)
    stem = args.name or f"{Path(args.graph).stem}.records"
    write_records(res.records, out / f"{stem}.csv", labels=labels)
    write_records_json(res.records, out / f"{stem}.json", labels=labels)
    meta = {
        "version": __version__,
        "graph": str(args.graph),
        "n_nodes": g.n,
        "n_edges": g.m,
        "master_seed": args.seed,
        "sample_seed": opts.sample_seed,
        "options": asdict(opts),
        "threads": args.threads,
        "targets": len(res.records) + len(res.failures),
        "completed": len(res.records),
        "failures": {str(int(labels[w])): msg for w, msg in res.failures.items()},
        "wall_time": time.time() - t0,
    }
    write_json(meta, out / f"{stem}.meta.json")
    print(f"wrote {out / (stem + '.csv')} ({len(res.records)} records, {len(res.failures)} failed)")
    if res.failures:
        return EXIT_NUMERICAL if not res.records else EXIT_PARTIAL
    return EXIT_OK


def cmd_approx(args) -> int:
    g, labels = _load_graph(args.graph)
    targets = _targets(labels, args.targets) if args.targets else np.arange(g.n)
    rows = []
    for w in targets:
        s = approx_optimum(g, int(w)).as_dict()
        s["node"] = int(labels[w])
        rows.append([s[c] for c in SUMMARY_COLUMNS])
    path = _outdir(args) / f"{args.name or Path(args.graph).stem + '.approx'}.csv"
    write_csv(path, SUMMARY_COLUMNS, rows)
    print(f"wrote {path} ({len(rows)} targets)")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    g, labels = _load_graph(args.graph)
    w = int(_targets(labels, args.target)[0])
    if args.linear:
        grid = np.linspace(args.gamma_min, args.gamma_max, args.points)
    else:
        grid = np.geomspace(args.gamma_min, args.gamma_max, args.points)
    curve = overlap_gap_curve(g, w, grid, iterative=args.iterative)
    path = _outdir(args) / f"{args.name or Path(args.graph).stem + f'.spectrum.w{args.target}'}.csv"
    comment = (f"target={args.target} gamma_min={format(grid[0], '.17g')} "
               f"gamma_max={format(grid[-1], '.17g')} points={len(grid)}")
    if curve.flags:
        comment += " flags=" + ";".join(f"{i}:{f}" for i, f in curve.flags)
    write_csv(path, curve.columns, list(curve.rows()), comment=comment)
    print(f"wrote {path}")
    if any(f == "failed" for _, f in curve.flags):
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evolve(args) -> int:
    g, labels = _load_graph(args.graph)
    w = int(_targets(labels, args.target)[0])
    gamma = args.gamma
    t_max = args.t_max
    if gamma is None or t_max is None:
        s = approx_optimum(g, w)
        gamma = s.gamma_approx if gamma is None else gamma
        t_max = 2.0 * s.t_approx if t_max is None else t_max
    times = np.linspace(0.0, t_max, args.points)
    h = SearchHamiltonian(g, gamma, w)
    amp = target_amplitudes(h, uniform_state(g.n), times, tol=args.evolve_tol, backend=args.backend)
    path = _outdir(args) / f"{args.name or Path(args.graph).stem + f'.evolve.w{args.target}'}.csv"
    write_csv(path, ("t", "p_w"), zip(times, np.abs(amp) ** 2),
              comment=f"target={args.target} gamma={format(gamma, '.17g')} backend={args.backend}")
    print(f"wrote {path}")
    return EXIT_OK


def _layer_size(path: Path, records, override):
    if override is not None:
        return override
    meta = path.with_name(path.name[:-4] + ".meta.json") if path.name.endswith(".csv") else None
    if meta is not None and meta.exists():
        return int(json.loads(meta.read_text())["n_nodes"])
    return len(records)


def cmd_analyze(args) -> int:
    paths = [Path(p) for p in args.records]
    if args.sizes and len(args.sizes) != len(paths):
        raise UsageError("--sizes needs one value per record file")
    if args.scaling and len(paths) < 3:
        raise UsageError("scaling mode needs record files from at least 3 layers")
    out = _outdir(args)
    stem = args.name or "analysis"
    report = {"log_base": "e", "top_fraction": args.top_fraction, "layers": []}
    scaling_pts, scaling_rows, pct_pts = [], [], []
    for i, p in enumerate(paths):
        recs = read_records(p)
        if not recs:
            raise UsageError(f"{p}: no records")
        n = _layer_size(p, recs, args.sizes[i] if args.sizes else None)
        st = layer_stats(recs, n_nodes=n)
        entry = {"file": str(p), "stats": st.as_dict()}
        try:
            entry["hub_linear"] = fit_hub_linear(recs, args.top_fraction).as_dict()
            entry["hub_time_slope"] = hub_time_slope(recs, args.top_fraction).as_dict()
        except ValueError as exc:
            entry["hub_fit_error"] = str(exc)
        classes = degree_class_average(recs)
        write_csv(out / f"{stem}.{p.stem}.degree_classes.csv", ("x", "y", "yerr", "count"),
                  [(k, m, s, c) for k, (m, s, c) in classes.items()])
        if args.percentile is not None:
            kept = percentile_filter(recs, args.percentile)
            entry["percentile_stats"] = layer_stats(kept, n_nodes=n).as_dict()
            pct_pts.append((n, entry["percentile_stats"]["mean_tw"]))
        report["layers"].append(entry)
        scaling_pts.append((n, st.mean_tw))
        scaling_rows.append((n, st.mean_tw, st.std_tw))
    if args.scaling:
        report["scaling"] = fit_scaling(scaling_pts).as_dict()
        write_csv(out / f"{stem}.scaling.csv", ("x", "y", "yerr"), scaling_rows)
        if args.percentile is not None:
            report["scaling_percentile"] = fit_scaling(pct_pts).as_dict()
            report["percentile"] = args.percentile
    if args.embedding:
        if len(paths) != 1:
            raise UsageError("--embedding pairs with exactly one record file")
        _write_h2(args, read_records(paths[0]), out / f"{stem}.h2.csv")
    jpath = out / f"{stem}.json"
    write_json(report, jpath)
    print(f"wrote {jpath}")
    if "scaling" in report:
        sc = report["scaling"]
        print(f"scaling exponent x = {sc['exponent']:.4f} +- {sc['stderr_x']:.4f}")
    return EXIT_OK


def _write_h2(args, recs, path):
    """Hyperbolic-disc coordinates with p_succ, keyed by the record node ids."""
    ids, full = read_embedding(args.embedding)
    radius = h2_radial(full)
    nodes = np.array([r.node for r in recs])
    pos = np.searchsorted(ids, nodes)
    if np.any(pos >= len(ids)) or np.any(ids[np.minimum(pos, len(ids) - 1)] != nodes):
        raise UsageError("some record nodes are missing from the embedding")
    write_csv(path, ("node", "r", "theta", "p_succ"),
              [(r.node, radius[j], full.theta[j], r.p_succ) for j, r in zip(pos, recs)])


# ---------------------------------------------------------------- parser


def _add_search_flags(p):
    d = SearchOptions()
    p.add_argument("--tol-f", type=float, default=d.tol_f)
    p.add_argument("--tol-x", type=float, default=d.tol_x)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--t-horizon-factor", type=float, default=d.t_horizon_factor)
    p.add_argument("--evolve-tol", type=float, default=d.evolve_tol)
    p.add_argument("--backend", choices=("chebyshev", "krylov", "dense"), default=d.backend)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or .)")
    common.add_argument("--config", help="flat JSON file of flag values")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--name", help="output file stem")
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = _Parser(prog="qwsearch", description="Quantum-walk spatial search on complex networks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a graph")
    p.add_argument("kind", choices=("ba", "er", "s1", "complete", "star"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-attach", type=int, default=3)
    p.add_argument("--m", type=int, help="target edge count (er)")
    p.add_argument("--gamma-pl", type=float, default=2.6)
    p.add_argument("--beta", type=float, default=1.5)
    p.add_argument("--avg-k", type=float, default=6.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("import-embedding", parents=[common],
                       help="align a coordinate file (CSV or Mercator .inf_coord) to a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--coords", required=True)
    p.add_argument("--beta", type=float)
    p.add_argument("--mu", type=float)
    p.set_defaults(func=cmd_import_embedding)

    p = sub.add_parser("renorm", parents=[common], help="renormalised replicas")
    p.add_argument("--graph", required=True)
    p.add_argument("--embedding")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--target-avg-k", type=float, help="default: <k> of layer 0")
    p.add_argument("--target-mode", choices=("original", "previous"), default="original")
    p.set_defaults(func=cmd_renorm)

    p = sub.add_parser("search", parents=[common], help="optimise p_succ per target")
    p.add_argument("--graph", required=True)
    p.add_argument("--targets", help="comma-separated node ids")
    p.add_argument("--sample", type=int, help="uniform sample of targets")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_search_flags(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("approx", parents=[common], help="spectral estimates per target")
    p.add_argument("--graph", required=True)
    p.add_argument("--targets")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("spectrum", parents=[common], help="overlap and gap curves over gamma")
    p.add_argument("--graph", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gamma-min", type=float, default=1e-3)
    p.add_argument("--gamma-max", type=float, default=1.0)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--linear", action="store_true")
    p.add_argument("--iterative", action="store_true")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("evolve", parents=[common], help="p_w(t) on a time grid")
    p.add_argument("--graph", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gamma", type=float, help="default: spectral estimate")
    p.add_argument("--t-max", type=float, help="default: twice the spectral time estimate")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--evolve-tol", type=float, default=1e-9)
    p.add_argument("--backend", choices=("chebyshev", "krylov", "dense"), default="chebyshev")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("analyze", parents=[common], help="statistics and fits over record files")
    p.add_argument("records", nargs="+")
    p.add_argument("--scaling", action="store_true", help="fit log mean T_w against log N")
    p.add_argument("--sizes", type=lambda s: [int(x) for x in s.split(",")],
                   help="layer sizes, default from the .meta.json sidecars")
    p.add_argument("--percentile", type=float)
    p.add_argument("--top-fraction", type=float, default=0.02)
    p.add_argument("--embedding", help="write hyperbolic-disc coordinates with p_succ")
    p.set_defaults(func=cmd_analyze)
    return ap


def _apply_config(ap, argv):
    """Re-parse with defaults taken from ``--config``."""
    args = ap.parse_args(argv)
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(doc, dict) or any(isinstance(v, (dict, list)) for v in doc.values()):
        raise UsageError("config must be a flat JSON object")
    sub = ap._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, val in doc.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise UsageError(f"config key {key!r} is not a flag of '{args.command}'")
        defaults[dest] = val
    sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"qwsearch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ConvergenceError, GenerationError, FloatingPointError) as exc:
        print(f"qwsearch: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, EdgeListError, SchemaError, EmbeddingError, ValueError, IndexError) as exc:
        print(f"qwsearch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
