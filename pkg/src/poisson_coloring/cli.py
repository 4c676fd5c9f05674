"""Command line entry point: ``poisson-coloring <subcommand> ...``."""

import argparse
import json
import sys

import numpy as np

from .errors import ColoringError


def _vector(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _dump(doc, path):
    from .experiment import _clean
    text = json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_simulate(args):
    from .process import ProcessConfig, run
    from .snapshot_io import write_sites_csv, write_snapshot
    if args.poisson and args.t_max is None and args.n is None:
        raise ColoringError("--poisson needs --t-max or --n")
    if args.t_max is not None and not args.poisson:
        raise ColoringError("--t-max requires --poisson")
    cfg = ProcessConfig(dimension=args.dim, model=args.model, seed_red=args.seed_red,
                        seed_blue=args.seed_blue,
                        n_points=None if args.t_max is not None else (args.n or 0),
                        t_max=args.t_max, time_mode="poisson" if args.poisson else "discrete",
                        rng_seed=args.rng, stream=args.stream, checkpoints=tuple(args.checkpoints))
    snap = run(cfg)
    write_snapshot(snap, args.out)
    if args.csv:
        write_sites_csv(snap, args.csv)
    print(f"wrote {args.out}: {snap.n_sites} sites, config {cfg.config_hash()[:12]}",
          file=sys.stderr)


def cmd_render(args):
    from . import frontier
    from .snapshot_io import read_snapshot
    from .svg import write_svg
    snap = read_snapshot(args.snapshot)
    cells = frontier.frontier_of(snap, args.frontier_m) if args.frontier_m else None
    write_svg(snap, args.out, size=args.size, radius=args.radius, frontier=cells)


def cmd_frontier(args):
    from . import frontier
    from .snapshot_io import read_snapshot
    snap = read_snapshot(args.snapshot)
    cells = frontier.frontier_of(snap, args.m)
    frontier.write_frontier(cells, args.out_csv, args.out_json)


def cmd_dimension(args):
    from . import fractal_stats as fs
    from .snapshot_io import read_snapshot
    snap = read_snapshot(args.snapshot)
    curve = fs.box_count(snap, args.scales)
    if args.window == "auto":
        kept = fs.scale_window(snap.n_arrivals, snap.dimension, curve.deltas)
        window = (min(kept), max(kept)) if kept else (1.0, 0.0)
    elif args.window == "all":
        window = None
    else:
        window = _vector(args.window)
    est = fs.fit_dimension(curve, window)
    _dump({"deltas": curve.deltas, "counts": curve.counts,
           "lebesgue_decay": fs.lebesgue_decay(curve, snap.dimension),
           "slope": est.slope, "stderr": est.stderr, "r_squared": est.r_squared,
           "window": est.window, "n_scales": est.n_scales}, args.out)


def cmd_experiment(args):
    from dataclasses import replace
    from .experiment import load_spec, run_experiment
    spec = load_spec(args.spec)
    if args.workers is not None:
        spec = replace(spec, workers=args.workers)
    if args.out_dir is not None:
        spec = replace(spec, output_dir=args.out_dir)
    if not spec.output_dir:
        raise ColoringError("no output directory: set output_dir in the spec or pass --out-dir")
    run_experiment(spec)
    print(f"wrote {spec.output_dir}", file=sys.stderr)


def read_polyline_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                if rows:
                    raise
                continue  # header
    return np.array(rows, dtype=np.float64)


def cmd_split(args):
    from . import curve_split as cs
    poly = cs.Polyline(read_polyline_csv(args.polyline))
    out = cs.split_once(poly, args.alpha)
    dev = cs.deviation_factor(poly)
    plain, deviating = cs.kappa_lower_bounds(args.alpha, dev.rho_max)
    doc = {"split": out.to_dict(), "rho_max": dev.rho_max,
           "bound_plain": plain, "bound_deviating": deviating}
    if args.depth is not None:
        doc["tree"] = cs.build_split_tree(poly, args.alpha, args.depth).to_dict()
    _dump(doc, args.out)


def build_parser():
    p = argparse.ArgumentParser(prog="poisson-coloring",
                                description="Two-color Poisson rain: simulation and frontier analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the coloring process and write a snapshot")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--model", choices=("point", "segment"), default="point")
    s.add_argument("--n", type=int, default=None, help="number of arrivals")
    s.add_argument("--seed-red", type=_vector, default=None)
    s.add_argument("--seed-blue", type=_vector, default=None)
    s.add_argument("--rng", type=int, default=0, help="base RNG seed")
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--poisson", action="store_true", help="time-stamp arrivals with a Poisson clock")
    s.add_argument("--t-max", type=float, default=None)
    s.add_argument("--checkpoints", type=_int_list, default=[])
    s.add_argument("--out", required=True)
    s.add_argument("--csv", default=None, help="also write the sites as CSV")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("render", help="draw a d=2 snapshot as SVG")
    r.add_argument("snapshot")
    r.add_argument("--out", required=True)
    r.add_argument("--size", type=int, default=800)
    r.add_argument("--radius", type=float, default=None)
    r.add_argument("--frontier-m", type=int, default=None, help="overlay frontier cells at 1/m")
    r.set_defaults(func=cmd_render)

    f = sub.add_parser("frontier", help="write frontier cells (CSV) and summary (JSON)")
    f.add_argument("snapshot")
    f.add_argument("--m", type=int, required=True)
    f.add_argument("--out-csv", required=True)
    f.add_argument("--out-json", default=None)
    f.set_defaults(func=cmd_frontier)

    d = sub.add_parser("dimension", help="box-count a snapshot and fit its dimension")
    d.add_argument("snapshot")
    d.add_argument("--scales", type=_int_list, default=[16, 32, 64, 128, 256, 512])
    d.add_argument("--window", default="auto", help="'auto', 'all' or dmin,dmax")
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_dimension)

    e = sub.add_parser("experiment", help="run a JSON experiment spec")
    e.add_argument("spec")
    e.add_argument("--workers", type=int, default=None)
    e.add_argument("--out-dir", default=None)
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("split", help="split a CSV polyline into separated sub-paths")
    c.add_argument("polyline")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--depth", type=int, default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_split)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ColoringError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
