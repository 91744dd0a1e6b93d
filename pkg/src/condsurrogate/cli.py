"""Command-line driver: ``condsurrogate {synth,trim,screen,estimate,quantiles,validate}``.

Typical run::

    condsurrogate synth --out-dir data
    condsurrogate trim --sim data/simulated.csv --measured data/measured.csv --out-dir run
    condsurrogate screen --measured data/measured.csv --sim run/kept_sim.csv --out-dir run
    condsurrogate estimate --measured run/inliers.csv --sim run/kept_sim.csv \\
        --estimator knn --sigma 0 --out-dir run/knn

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import BenchmarkConfig, render_report, run_benchmark
from .datamodel import Dataset, Origin
from .errors import DataError, NumericError, ProvenanceError
from .forest import ForestParams
from .io import (
    EVAL_SUFFIX,
    RunManifest,
    canonical_json,
    fmt,
    read_dataset,
    read_surrogate,
    write_dataset,
    write_l1_curve,
    write_rows,
    write_screening_report,
    write_surrogate,
)
from .metric import MetricKind
from .neighbors import Backend
from .pipeline import estimate, screen, trim
from .surrogate import GUMBEL_CLIP, empirical_distribution, gumbel_curve
from .synthbench import PRESETS

log = logging.getLogger("condsurrogate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
TABLE_LEVELS = (0.25, 0.5, 0.75, 0.95, 0.99, 0.995)
SCREEN_STAGES = ("screen", "screen-bypassed")
CURVE_POINTS = 1024


class UsageError(Exception):
    pass


def _input(path, role):
    p = Path(path)
    if p.name.endswith(EVAL_SUFFIX):
        raise UsageError(f"{p} is an evaluation-only response file and cannot be used as {role}")
    if not p.exists():
        raise DataError(f"{p}: no such file")
    return p


def _manifest_path(args, out_dir, default_name):
    return Path(args.manifest_out) if args.manifest_out else out_dir / default_name


def _geometry_params(args):
    return {"metric": args.metric, "ridge": args.ridge, "backend": args.backend}


# --------------------------------------------------------------------------- commands


def cmd_synth(args):
    model = PRESETS[args.model](args.seed)
    from dataclasses import replace
    model = replace(model, contamination=args.contamination,
                    contamination_offset=args.contamination_offset)
    meas, ym, sim, planted = model.generate(args.n_measured, args.m_simulated)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("synth", params={
        "model": args.model, "seed": args.seed, "n_measured": args.n_measured,
        "m_simulated": args.m_simulated, "contamination": args.contamination,
        "contamination_offset": args.contamination_offset})
    hdr = man.header("synth")
    write_dataset(out / "measured.csv", meas, hdr)
    write_dataset(out / "simulated.csv", sim, hdr)
    write_rows(out / ("measured" + EVAL_SUFFIX), ["row_id", "y", "planted"],
               zip(range(meas.n), ym.tolist(), planted.tolist()), hdr)
    man.write(_manifest_path(args, out, "synth_manifest.json"))
    return EXIT_OK


def cmd_trim(args):
    sim_path = _input(args.sim, "simulations")
    meas_path = _input(args.measured, "measurements")
    sim, _ = read_dataset(sim_path, Origin.SIMULATED, args.response_column)
    meas, _ = read_dataset(meas_path, Origin.MEASURED, None)
    kept, report, geo = trim(sim, meas, args.k, MetricKind(args.metric), args.ridge,
                             args.threshold_override, Backend(args.backend), args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("trim", params={"k": args.k, **_geometry_params(args),
                                      "threshold_override": args.threshold_override})
    man.add_input("simulations", sim_path)
    man.add_input("measurements", meas_path)
    man.results = {"tau": report.tau, "threshold": report.threshold, "n_discarded": report.n_outliers,
                   "n_kept": kept.n, "flat_curve": report.flat, "geometry": geo.to_dict()}
    hdr = man.header("trim")
    write_dataset(out / "kept_sim.csv", kept, hdr)
    write_screening_report(out / "trim_report.csv", report, hdr)
    write_l1_curve(out / "trim_l1.csv", report, hdr)
    man.write(_manifest_path(args, out, "trim_manifest.json"))
    print(f"trim: threshold {fmt(report.threshold)} at tau={report.tau}; "
          f"discarded {report.n_outliers} of {report.n} simulations")
    return EXIT_OK


def cmd_screen(args):
    meas_path = _input(args.measured, "measurements")
    sim_path = _input(args.sim, "simulations")
    meas, _ = read_dataset(meas_path, Origin.MEASURED, None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("screen", params={"k": args.k, **_geometry_params(args),
                                        "threshold_override": args.threshold_override,
                                        "no_screen": args.no_screen})
    man.add_input("measurements", meas_path)
    man.add_input("simulations", sim_path)
    if args.no_screen:
        man.results = {"n_outliers": 0, "n_inliers": meas.n}
        write_dataset(out / "inliers.csv", meas, man.header("screen-bypassed"))
        man.write(_manifest_path(args, out, "screen_manifest.json"))
        print(f"screen: bypassed; passed all {meas.n} measurements through")
        return EXIT_OK
    sim, _ = read_dataset(sim_path, Origin.SIMULATED, args.response_column)
    inl, outl, report, geo = screen(meas, sim, args.k, MetricKind(args.metric), args.ridge,
                                    args.threshold_override, Backend(args.backend), args.threads)
    man.results = {"tau": report.tau, "threshold": report.threshold, "n_outliers": report.n_outliers,
                   "n_inliers": report.n - report.n_outliers, "flat_curve": report.flat,
                   "geometry": geo.to_dict()}
    hdr = man.header("screen")
    write_dataset(out / "inliers.csv", inl, hdr)
    if outl.n:
        write_dataset(out / "outliers.csv", outl, hdr)
    else:
        write_rows(out / "outliers.csv", list(meas.column_names), [], hdr)
    write_screening_report(out / "screen_report.csv", report, hdr)
    write_l1_curve(out / "screen_l1.csv", report, hdr)
    man.write(_manifest_path(args, out, "screen_manifest.json"))
    print(f"screen: threshold {fmt(report.threshold)} at tau={report.tau}; "
          f"flagged {report.n_outliers} of {report.n} measurements")
    return EXIT_OK


def _parse_sigma(text):
    t = text.strip().lower()
    if t == "silverman":
        return t
    try:
        v = float(t)
    except ValueError:
        raise UsageError(f"--sigma must be 0, 'silverman' or a nonnegative number, got {text!r}") from None
    if not v >= 0:
        raise UsageError("--sigma must be nonnegative")
    return v


def _quantile_cell(dist, level):
    if level > dist.ceiling:
        return ""
    return dist.quantile(level)


def _cdf_series(dist, points):
    if dist.sigma == 0:
        t = dist.means
    else:
        t = np.linspace(dist.means[0] - 4 * dist.sigma, dist.means[-1] + 4 * dist.sigma, points)
    F = dist.cdf(t)
    g, clipped = gumbel_curve(F)
    return zip(t.tolist(), F.tolist(), g.tolist(), clipped.tolist())


def cmd_estimate(args):
    meas_path = _input(args.measured, "measurements")
    sim_path = _input(args.sim, "simulations")
    sigma = _parse_sigma(args.sigma)
    meas, meta = read_dataset(meas_path, Origin.MEASURED, None)
    stage = meta.get("stage")
    if stage not in SCREEN_STAGES and not args.no_screen:
        raise ProvenanceError(
            f"{meas_path} lacks a screening header; run 'condsurrogate screen' first "
            "(or pass --no-screen to estimate from unscreened measurements)")
    sim, _ = read_dataset(sim_path, Origin.SIMULATED, args.response_column)
    params = ForestParams(n_trees=args.trees, max_depth=args.max_depth, min_leaf=args.min_leaf,
                          mtry=args.mtry)
    est = estimate(meas, sim, args.estimator, sigma, k=args.k, grid_size=args.grid_size,
                   forest_params=params, seed=args.seed, metric=MetricKind(args.metric),
                   ridge=args.ridge, backend=Backend(args.backend), workers=args.threads)
    label = est.estimator + ("_smoothed" if est.sigma > 0 else "")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest("estimate", params={
        "estimator": args.estimator, "sigma_policy": est.sigma_policy, "k_neighbors": args.k,
        "k_grid": args.grid_size, "forest": params.to_dict(), "seed": args.seed,
        **_geometry_params(args), "measurement_stage": stage or "unscreened",
        "no_screen": args.no_screen})
    man.add_input("measurements", meas_path)
    man.add_input("simulations", sim_path)
    man.results = {"sigma": est.sigma, "pooled_std": est.pooled_std,
                   "deficit": est.surrogate.deficit, "n_conditionals": est.surrogate.n_conditionals,
                   "geometry": est.geometry.to_dict()}
    if est.grid is not None:
        man.results["thresholds"] = est.grid.alphas.tolist()
    hdr = man.header("estimate")
    write_surrogate(out / "surrogate.json", est.surrogate, estimator=est.estimator, label=label,
                    sigma_policy=est.sigma_policy, manifest_digest=man.digest)
    levels = args.levels or TABLE_LEVELS
    write_rows(out / "quantiles.csv", ["level", label],
               ((a, _quantile_cell(est.surrogate, a)) for a in levels), hdr)
    write_rows(out / "cdf.csv", ["t", "cdf", "gumbel", "clipped"],
               _cdf_series(est.surrogate, args.curve_points),
               {**hdr, "cdf_ceiling": fmt(est.surrogate.ceiling), "gumbel_clip": fmt(GUMBEL_CLIP)})
    if est.forest is not None:
        est.forest.save(out / "forest.npz", manifest_digest=man.digest)
    man.write(_manifest_path(args, out, "estimate_manifest.json"))
    print(f"estimate: {label} surrogate from {meas.n} measurements, sigma={fmt(est.sigma)}, "
          f"deficit={fmt(est.surrogate.deficit)}")
    return EXIT_OK


def cmd_quantiles(args):
    columns = [("knn", args.knn), ("knn_smoothed", args.knn_smoothed), ("forest", args.forest),
               ("forest_smoothed", args.forest_smoothed)]
    columns = [(name, path) for name, path in columns if path]
    if not columns and not args.empirical:
        raise UsageError("give at least one surrogate file or --empirical")
    man = RunManifest("quantiles", params={"levels": list(args.levels or TABLE_LEVELS)})
    dists = []
    for name, path in columns:
        dist, _ = read_surrogate(path)
        man.add_input(name, path)
        dists.append((name, dist))
    if args.empirical:
        ds, _ = read_dataset(args.empirical, Origin.MEASURED, args.response_column)
        if ds.y is None:
            raise DataError(f"{args.empirical} has no {args.response_column!r} column")
        man.add_input("empirical", args.empirical)
        dists.append(("empirical", empirical_distribution(ds.y)))
    levels = args.levels or TABLE_LEVELS
    rows = [[a] + [_quantile_cell(d, a) for _, d in dists] for a in levels]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, ["level"] + [n for n, _ in dists], rows, man.header("quantiles"))
    if args.manifest_out:
        man.write(args.manifest_out)
    return EXIT_OK


def cmd_validate(args):
    cfg = BenchmarkConfig(model=args.model, variance_model=args.variance_model,
                          n_measured=args.n_measured, m_simulated=args.m_simulated,
                          n_mc=args.n_mc, seed=args.seed, k=args.k, trees=args.trees,
                          grid_size=args.grid_size, baseline_only=args.baseline_only,
                          threads=args.threads)
    report = run_benchmark(cfg)
    man = RunManifest("validate", params=report["config"])
    report["manifest_digest"] = man.digest
    text = render_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.manifest_out:
        man.write(args.manifest_out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _level(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("levels must lie strictly between 0 and 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condsurrogate", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"condsurrogate {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("--manifest-out", default=None)

    geom = argparse.ArgumentParser(add_help=False)
    geom.add_argument("--metric", choices=[m.value for m in MetricKind], default="mahalanobis")
    geom.add_argument("--ridge", type=float, default=None,
                      help="covariance ridge (default 1e-9 * trace / d)")
    geom.add_argument("--backend", choices=[b.value for b in Backend], default="tree")
    geom.add_argument("--response-column", default="y")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic data set")
    s.add_argument("--model", choices=sorted(PRESETS), default="default")
    s.add_argument("--n-measured", type=_positive_int, default=5000)
    s.add_argument("--m-simulated", type=_positive_int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--contamination", type=float, default=0.0)
    s.add_argument("--contamination-offset", type=float, default=5.0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("trim", parents=[common, geom], help="discard simulations far from the measurements")
    s.add_argument("--sim", required=True)
    s.add_argument("--measured", required=True)
    s.add_argument("--k", type=_positive_int, default=1)
    s.add_argument("--threshold-override", type=float, default=None)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_trim)

    s = sub.add_parser("screen", parents=[common, geom], help="flag measurements far from the simulations")
    s.add_argument("--measured", required=True)
    s.add_argument("--sim", required=True)
    s.add_argument("--k", type=_positive_int, default=10)
    s.add_argument("--threshold-override", type=float, default=None)
    s.add_argument("--no-screen", action="store_true", help="pass all rows through")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_screen)

    s = sub.add_parser("estimate", parents=[common, geom], help="estimate the response distribution")
    s.add_argument("--measured", required=True)
    s.add_argument("--sim", required=True)
    s.add_argument("--estimator", choices=["knn", "forest"], default="knn")
    s.add_argument("--sigma", default="0", help="0, 'silverman' or an explicit bandwidth")
    s.add_argument("--k", type=_positive_int, default=10)
    s.add_argument("--grid-size", type=_positive_int, default=64)
    s.add_argument("--trees", type=_positive_int, default=200)
    s.add_argument("--max-depth", type=int, default=None)
    s.add_argument("--min-leaf", type=_positive_int, default=5)
    s.add_argument("--mtry", type=_positive_int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--levels", type=_level, nargs="+", default=None)
    s.add_argument("--curve-points", type=_positive_int, default=CURVE_POINTS)
    s.add_argument("--no-screen", action="store_true",
                   help="accept measurements that did not go through 'screen'")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("quantiles", parents=[common], help="assemble a quantile table")
    s.add_argument("--knn")
    s.add_argument("--knn-smoothed")
    s.add_argument("--forest")
    s.add_argument("--forest-smoothed")
    s.add_argument("--empirical", help="CSV with measured responses (evaluation only)")
    s.add_argument("--response-column", default="y")
    s.add_argument("--levels", type=_level, nargs="+", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_quantiles)

    s = sub.add_parser("validate", parents=[common], help="benchmark against synthetic ground truth")
    s.add_argument("--model", choices=sorted(PRESETS), default="default")
    s.add_argument("--variance-model", choices=sorted(PRESETS), default="noisy")
    s.add_argument("--n-measured", type=_positive_int, default=5000)
    s.add_argument("--m-simulated", type=_positive_int, default=20000)
    s.add_argument("--n-mc", type=_positive_int, default=10 ** 6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k", type=_positive_int, default=10)
    s.add_argument("--trees", type=_positive_int, default=200)
    s.add_argument("--grid-size", type=_positive_int, default=64)
    s.add_argument("--baseline-only", action="store_true")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except DataError as e:
        print(f"condsurrogate: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"condsurrogate: numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
