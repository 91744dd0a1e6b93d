"""Validation of the surrogate against synthetic ground truth.

``run_benchmark`` draws a synthetic measured/simulated pair, fits both
estimators and compares them with Monte-Carlo oracles:

* KS distance between surrogate and true CDF (forest: below its last
  threshold only, where its CDF is defined);
* tail-quantile errors of the kNN surrogate in simulated-response standard
  deviations;
* the variance deficit of regression imputation next to the variance of
  the full kNN surrogate, on a model with substantial conditional noise.

The report depends only on the configuration, never on timing or thread
count, so identical configurations give byte-identical JSON.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .forest import ForestParams
from .neighbors import Backend
from .pipeline import estimate
from .synthbench import (
    PRESETS,
    empirical_cdf_function,
    empirical_quantile,
    evaluation_grid,
    ks_distance,
)

TAIL_LEVELS = (0.95, 0.99, 0.995)

KS_KNN_MAX = 0.03
KS_FOREST_MAX = 0.05
TAIL_QUANTILE_MAX = 0.10
BASELINE_EXCESS_MAX = 0.02
SURROGATE_VAR_RTOL = 0.05
COND_VAR_SHARE_MIN = 0.2


@dataclass
class BenchmarkConfig:
    model: str = "default"
    variance_model: str = "noisy"
    n_measured: int = 5000
    m_simulated: int = 20000
    n_mc: int = 10 ** 6
    seed: int = 0
    k: int = 10
    trees: int = 200
    grid_size: int = 64
    grid_points: int = 4096
    baseline_only: bool = False
    levels: tuple = TAIL_LEVELS
    threads: int = field(default=1, compare=False)


def _model(name, seed):
    try:
        return PRESETS[name](seed)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None


def knn_section(model, cfg: BenchmarkConfig, oracle_sorted) -> dict:
    meas, _, sim, _ = model.generate(cfg.n_measured, cfg.m_simulated)
    est = estimate(meas, sim, "knn", 0.0, k=cfg.k, backend=Backend.ACCELERATED, workers=cfg.threads)
    grid = evaluation_grid(oracle_sorted, sim.y, n=cfg.grid_points)
    ks = ks_distance(est.surrogate.cdf, empirical_cdf_function(oracle_sorted), grid)
    scale = float(np.std(sim.y, ddof=1))
    errs = {}
    for a in cfg.levels:
        q = est.surrogate.quantile(a)
        errs[repr(a)] = (q - float(empirical_quantile(oracle_sorted, a))) / scale
    return {
        "ks": ks,
        "ks_pass": ks <= KS_KNN_MAX,
        "quantile_error_std_units": errs,
        "quantiles_pass": all(abs(e) <= TAIL_QUANTILE_MAX for e in errs.values()),
        "response_std": scale,
    }, (meas, sim)


def forest_section(cfg: BenchmarkConfig, data, oracle_sorted) -> dict:
    meas, sim = data
    est = estimate(meas, sim, "forest", 0.0, k=cfg.k, grid_size=cfg.grid_size,
                   forest_params=ForestParams(n_trees=cfg.trees), seed=cfg.seed,
                   workers=cfg.threads)
    top = float(est.grid.alphas[-1])
    grid = evaluation_grid(oracle_sorted, sim.y, n=cfg.grid_points)
    grid = grid[grid <= top]
    ks = ks_distance(est.surrogate.cdf, empirical_cdf_function(oracle_sorted), grid)
    return {"ks_sub_deficit": ks, "ks_pass": ks <= KS_FOREST_MAX, "deficit": est.surrogate.deficit,
            "last_threshold": top, "n_thresholds": est.grid.k}


def variance_section(cfg: BenchmarkConfig) -> dict:
    model = _model(cfg.variance_model, cfg.seed)
    vd = model.variance_decomposition(cfg.n_mc, cfg.seed + 1)
    meas, _, sim, _ = model.generate(cfg.n_measured, cfg.m_simulated)
    est = estimate(meas, sim, "knn", 0.0, k=cfg.k, workers=cfg.threads)
    baseline_var = float(np.var(est.neighbor_responses.mean(axis=1)))
    surrogate_var = est.surrogate.moments()[1]
    share = vd["mean_cond_var"] / vd["var_y"]
    return {
        "model": cfg.variance_model,
        "oracle_var_y": vd["var_y"],
        "oracle_var_g": vd["var_g"],
        "oracle_mean_cond_var": vd["mean_cond_var"],
        "cond_var_share": share,
        "premise_holds": share >= COND_VAR_SHARE_MIN,
        "baseline_var": baseline_var,
        "surrogate_var": surrogate_var,
        "baseline_pass": baseline_var <= vd["var_g"] + BASELINE_EXCESS_MAX,
        "surrogate_rel_error": surrogate_var / vd["var_y"] - 1.0,
        "surrogate_pass": abs(surrogate_var / vd["var_y"] - 1.0) <= SURROGATE_VAR_RTOL,
    }


def run_benchmark(cfg: BenchmarkConfig) -> dict:
    config = asdict(cfg)
    config.pop("threads")
    config["levels"] = list(cfg.levels)
    report = {"config": config}
    if not cfg.baseline_only:
        model = _model(cfg.model, cfg.seed)
        oracle = np.sort(model.oracle_sample(cfg.n_mc, cfg.seed + 1))
        report["knn"], data = knn_section(model, cfg, oracle)
        report["forest"] = forest_section(cfg, data, oracle)
    report["variance_deficit"] = variance_section(cfg)
    return report


def render_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"
