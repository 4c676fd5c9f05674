"""Experiment specs, parallel replicate execution and report files.

Spec schema (JSON)::

    {
      "config":      {...ProcessConfig fields...},
      "replicates":  8,
      "checkpoints": [1000, 10000],          # optional, overrides config
      "analyses":    [{"name": "fit_dimension", "params": {...}}, ...],
      "output_dir":  "out/",                  # optional
      "workers":     4,                       # optional, default 1
      "save_snapshots": false                 # optional
    }

Replicate r runs ``config`` with ``stream = config.stream + r``; its position
and clock generators are PCG64 seeded by ``SeedSequence(rng_seed,
spawn_key=(stream, 0))`` and ``(stream, 1)``.  Raw rows are sorted by
replicate, so ``rows.csv`` and ``report.json`` do not depend on the worker
count.  Wall times go to ``timings.json`` only.
"""

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from . import fractal_stats as fs
from . import frontier
from .errors import DegenerateFit, InvalidConfig
from .harness import map_replicates, replicate_config
from .process import ProcessConfig, run
from .snapshot_io import write_snapshot

ANALYSES = ("box_count", "fit_dimension", "hitting_probability_scaling",
            "monochromatic_ball_rate", "separated_ball_decay",
            "frontier_convergence_series", "slice_dimension", "frontier_components")
ROW_FIELDS = ("replicate", "analysis", "statistic", "scale", "value")


@dataclass(frozen=True)
class ExperimentSpec:
    config: ProcessConfig
    replicates: int = 1
    analyses: tuple = ()
    output_dir: str = None
    workers: int = 1
    save_snapshots: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidConfig("replicates must be at least 1")
        if self.workers < 1:
            raise InvalidConfig("workers must be at least 1")
        for a in self.analyses:
            if a["name"] not in ANALYSES:
                raise InvalidConfig(f"unknown analysis {a['name']!r}; known: {', '.join(ANALYSES)}")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "config" not in doc:
            raise InvalidConfig("experiment spec needs a 'config' block")
        cfg = dict(doc["config"])
        if "checkpoints" in doc:
            cfg["checkpoints"] = doc["checkpoints"]
        analyses = tuple({"name": a["name"], "params": dict(a.get("params", {}))}
                         for a in doc.get("analyses", []))
        unknown = set(doc) - {"config", "replicates", "checkpoints", "analyses",
                              "output_dir", "workers", "save_snapshots"}
        if unknown:
            raise InvalidConfig(f"unknown spec fields: {sorted(unknown)}")
        return cls(ProcessConfig.from_dict(cfg), int(doc.get("replicates", 1)), analyses,
                   doc.get("output_dir"), int(doc.get("workers", 1)),
                   bool(doc.get("save_snapshots", False)))

    def to_dict(self):
        return {"config": self.config.to_dict(), "replicates": self.replicates,
                "analyses": [dict(a) for a in self.analyses]}

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_spec(path):
    with open(path) as fh:
        return ExperimentSpec.from_dict(json.load(fh))


@dataclass
class ExperimentReport:
    rows: list
    summary: dict
    provenance: dict
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {"provenance": self.provenance, "analyses": self.summary}


# --------------------------------------------------------------------------
# per-replicate work
# --------------------------------------------------------------------------

class _Context:
    """Caches the index and frontier cells of one snapshot across analyses."""

    def __init__(self, snap):
        self.snap = snap
        self._index = None
        self._cells = {}

    @property
    def index(self):
        if self._index is None:
            self._index = self.snap.index()
        return self._index

    def cells(self, m):
        if m not in self._cells:
            self._cells[m] = frontier.frontier_of(self.snap, m, index=self.index)
        return self._cells[m]

    def curve(self, scales):
        scales = sorted(int(m) for m in scales)
        return fs.BoxCountCurve(tuple(1.0 / m for m in scales),
                                tuple(len(self.cells(m)) for m in scales))


def _window(params, curve, snap):
    w = params.get("window", "auto")
    if w == "auto":
        kept = fs.scale_window(snap.n_arrivals, snap.dimension, curve.deltas)
        return (min(kept), max(kept)) if kept else (1.0, 0.0)
    return None if w is None else tuple(w)


def _ball_centers(config, params):
    sizes = params.get("sizes", [1, 2, 3, 4, 5])
    r = params.get("r") or fs.default_ball_radius(max(sizes))
    return fs.lattice_ball_family(config, max(sizes), r), r, sizes


def _analysis_rows(ctx, name, params, config):
    snap = ctx.snap
    d = snap.dimension
    if name == "box_count":
        curve = ctx.curve(params["scales"])
        rows = [("N", dl, float(n)) for dl, n in zip(curve.deltas, curve.counts)]
        rows += [("N_delta_d", dl, v) for dl, v in zip(curve.deltas, fs.lebesgue_decay(curve, d))]
        return rows
    if name == "fit_dimension":
        curve = ctx.curve(params["scales"])
        est = fs.fit_dimension(curve, _window(params, curve, snap))
        return [("slope", math.nan, est.slope), ("stderr", math.nan, est.stderr),
                ("r_squared", math.nan, est.r_squared), ("n_scales", math.nan, float(est.n_scales))]
    if name == "frontier_components":
        rep = frontier.connected_components(ctx.cells(int(params.get("m", 512))))
        return [("component_count", math.nan, float(rep.component_count))]
    if name == "hitting_probability_scaling":
        deltas = sorted(params["deltas"], reverse=True)
        fs.check_hitting_precondition(config, params["x"], deltas)
        m = int(params.get("m", 512))
        hits = fs.frontier_hits(snap, params["x"], deltas, m, index=ctx.index)
        return [("hit", dl, float(h)) for dl, h in zip(deltas, hits)]
    if name == "monochromatic_ball_rate":
        rs = params["r"] if isinstance(params["r"], list) else [params["r"]]
        for r in rs:
            fs.check_ball_precondition(config, params["x"], r)
        return [("monochromatic", r, float(fs.is_monochromatic(snap, params["x"], r / 6.0)))
                for r in rs]
    if name == "separated_ball_decay":
        centers, r, _ = _ball_centers(config, params)
        hits = fs.family_hits(snap, centers, r, int(params.get("m", 256)), index=ctx.index)
        return [("hit", float(j + 1), float(h)) for j, h in enumerate(hits)]
    if name == "frontier_convergence_series":
        m = int(params.get("m", 512))
        ns = list(snap.config.checkpoints)
        if not ns or ns[-1] != snap.n_arrivals:
            ns.append(snap.n_arrivals)
        centers = [frontier.frontier_of(snap.prefix(n), m).centers() for n in ns]
        return [("hausdorff", float(n), frontier.hausdorff_distance(a, b))
                for n, a, b in zip(ns, centers, centers[1:])]
    if name == "slice_dimension":
        scales = sorted(int(m) for m in params["scales"])
        out = []
        for z in params.get("offsets", [0.5]):
            cls = [frontier.classify_slice(snap, m, int(params.get("axis", d - 1)), z,
                                           index=ctx.index) for m in scales]
            curve = fs.box_count_classifications(cls)
            w = params.get("window")
            est = fs.fit_dimension(curve, None if w is None else tuple(w))
            out.append(("slope", float(z), est.slope))
        return out
    raise InvalidConfig(f"unknown analysis {name!r}")


def _replicate_job(r, config, analyses, snapshot_dir):
    t0 = time.perf_counter()
    cfg = replicate_config(config, r)
    snap = run(cfg)
    if snapshot_dir:
        write_snapshot(snap, os.path.join(snapshot_dir, f"replicate_{r:04d}.pfro"))
    ctx = _Context(snap)
    rows = []
    for a in analyses:
        for stat, scale, value in _analysis_rows(ctx, a["name"], a["params"], config):
            rows.append((r, a["name"], stat, float(scale), float(value)))
    return rows, time.perf_counter() - t0


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _mean_ci(values):
    v = np.asarray(values, dtype=np.float64)
    out = {"values": v.tolist(), "mean": float(v.mean()), "median": float(np.median(v))}
    if v.size >= 2:
        sd = float(v.std(ddof=1))
        half = float(stats.t.ppf(0.975, v.size - 1)) * sd / math.sqrt(v.size)
        out.update(stdev=sd, ci95=[out["mean"] - half, out["mean"] + half])
    return out


def _values(rows, name, stat):
    return [v for _, a, s, _, v in rows if a == name and s == stat]


def _table(rows, name, stat):
    """{scale: [values ordered by replicate]} for one analysis statistic."""
    out = {}
    for r, a, s, scale, value in rows:
        if a == name and s == stat:
            out.setdefault(scale, []).append(value)
    return out


def _grid(rows, name, stat, replicates, descending=True):
    """(scales, matrix[replicate, scale]) for one analysis statistic."""
    scales = sorted({sc for _, a, s, sc, _ in rows if a == name and s == stat},
                    reverse=descending)
    col = {sc: j for j, sc in enumerate(scales)}
    mat = np.zeros((replicates, len(scales)))
    for r, a, s, sc, v in rows:
        if a == name and s == stat:
            mat[r, col[sc]] = v
    return scales, mat


def summarize(spec: ExperimentSpec, rows):
    """Aggregate statistics per analysis.

    A fit that cannot be computed from otherwise valid rows (for example a
    radius no replicate hit) is reported as ``{"error": ...}`` instead of
    aborting; failures inside a replicate abort the whole experiment.
    """
    summary = {}
    for a in spec.analyses:
        try:
            summary[a["name"]] = _summarize_one(spec, rows, a["name"], a["params"])
        except DegenerateFit as exc:
            summary[a["name"]] = {"error": f"DegenerateFit: {exc}"}
    return summary


def _summarize_one(spec, rows, name, params):
    R = spec.replicates
    if name == "box_count":
        tab = _table(rows, name, "N")
        scales = sorted(tab, reverse=True)
        return {"scales": scales, "mean_N": [float(np.mean(tab[s])) for s in scales]}
    if name == "fit_dimension":
        return {stat: _mean_ci(_values(rows, name, stat)) for stat in ("slope", "r_squared")}
    if name == "frontier_components":
        counts = _values(rows, name, "component_count")
        return {"component_count": counts,
                "fraction_disconnected": float(np.mean([c >= 2 for c in counts]))}
    if name == "hitting_probability_scaling":
        deltas, hits = _grid(rows, name, "hit", R)
        fit = fs.fit_hitting(hits.astype(bool), deltas)
        return {"deltas": deltas, "frequencies": list(fit.frequencies),
                "exponent": fit.exponent, "intercept": fit.intercept, "ci95": list(fit.ci)}
    if name == "monochromatic_ball_rate":
        tab = _table(rows, name, "monochromatic")
        per = {}
        for r in sorted(tab, reverse=True):
            br = fs.ball_rate(tab[r])
            per[repr(r)] = {"p_hat": br.p_hat, "ci95": list(br.ci), "hits": br.hits}
        return per
    if name == "separated_ball_decay":
        centers, r, sizes = _ball_centers(spec.config, params)
        _, hits = _grid(rows, name, "hit", R, descending=False)
        fit = fs.fit_ball_decay(hits.astype(bool), sizes, centers, r)
        return {"sizes": list(fit.sizes), "frequencies": list(fit.frequencies),
                "slope": fit.slope, "ci95": list(fit.ci), "radius": fit.radius,
                "centers": [list(c) for c in fit.centers]}
    if name == "frontier_convergence_series":
        tab = _table(rows, name, "hausdorff")
        ns = sorted(tab)
        return {"n": ns, "median": [float(np.median(tab[n])) for n in ns],
                "values": [tab[n] for n in ns]}
    if name == "slice_dimension":
        tab = _table(rows, name, "slope")
        return {repr(z): _mean_ci(tab[z]) for z in sorted(tab)}
    raise InvalidConfig(f"unknown analysis {name!r}")


def run_experiment(spec: ExperimentSpec, write=True) -> ExperimentReport:
    t0 = time.perf_counter()
    snap_dir = None
    if write and spec.output_dir:
        os.makedirs(spec.output_dir, exist_ok=True)
        if spec.save_snapshots:
            snap_dir = os.path.join(spec.output_dir, "snapshots")
            os.makedirs(snap_dir, exist_ok=True)
    results = map_replicates(_replicate_job, spec.replicates,
                             (spec.config, spec.analyses, snap_dir), spec.workers)
    rows = [row for rep_rows, _ in results for row in rep_rows]
    provenance = {"config": spec.config.to_dict(), "config_hash": spec.config.config_hash(),
                  "spec_hash": spec.spec_hash(), "code_version": __version__,
                  "replicates": spec.replicates,
                  "analyses": [dict(a) for a in spec.analyses],
                  "rng": "PCG64(SeedSequence(rng_seed, spawn_key=(stream + r, 0|1)))"}
    report = ExperimentReport(rows, summarize(spec, rows), provenance,
                              {"workers": spec.workers,
                               "replicate_seconds": [s for _, s in results],
                               "total_seconds": time.perf_counter() - t0})
    if write and spec.output_dir:
        write_report(report, spec.output_dir)
    return report


def _fmt_value(v):
    return "" if isinstance(v, float) and math.isnan(v) else repr(v)


def write_report(report: ExperimentReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rows.csv"), "w") as fh:
        fh.write(",".join(ROW_FIELDS) + "\n")
        for r, a, s, scale, value in report.rows:
            fh.write(f"{r},{a},{s},{_fmt_value(scale)},{_fmt_value(value)}\n")
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_clean(report.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump(_clean(report.timings), fh, indent=2, sort_keys=True)
        fh.write("\n")
