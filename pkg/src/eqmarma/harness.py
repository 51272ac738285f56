"""Simulation studies comparing EqM, EM and the naive zero-fill estimator.

Seeding: the realisation of process ``i`` is driven by
``SeedSequence(master_seed, spawn_key=(i,))`` and the missing-data mask for
fraction index ``j`` by ``spawn_key=(i, j)``. All three estimators see the
same mask and are themselves deterministic, so results depend only on the
configuration.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .em import em_init, em_run, naive_estimate
from .eqm import EqmConfig, eqm_run
from .model import ArmaParams, ExperimentProblem, make_problem, random_stable_arma, simulate_arma
from .statespace import build_state_space, kalman_filter, one_step_predictions

log = logging.getLogger(__name__)

ALGORITHMS = ("naive", "eqm", "em")
EXPERIMENTS = ("ar_sweep", "arma22_sweep", "arma22_case")
CASE_PARAMS = ArmaParams([-0.8897, 0.4858], [-0.2279, 0.2488], 0.1)
CSV_COLUMNS = ("process_id", "algorithm", "missing_fraction", "fit", "wall_time_s", "iterations",
               "final_loglik", "clamp_count", "termination")


class UndefinedFitError(ValueError):
    pass


@dataclass(frozen=True)
class IterationPolicy:
    max_iters: int = 100
    criterion: str = "param"  # "param" | "loglik" | "fixed"
    tol: float = 1e-6


@dataclass(frozen=True)
class SweepConfig:
    experiment: str = "ar_sweep"
    n_processes: int = 20
    series_length: int = 1250
    sigma2: float = 1.0
    missing_fractions: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    order_range: tuple[int, int] = (1, 15)
    ma_order: int = 0
    eqm_policy: IterationPolicy = IterationPolicy()
    em_policy: IterationPolicy = IterationPolicy()
    master_seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.series_length < 30:
            raise ValueError("series_length must be >= 30")
        if any(not 0.0 <= f <= 0.5 for f in self.missing_fractions):
            raise ValueError("missing fractions must lie in [0, 0.5]")
        if self.n_processes < 1:
            raise ValueError("n_processes must be >= 1")
        lo, hi = self.order_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad order range {self.order_range}")

    @classmethod
    def ar_sweep(cls, **kw) -> "SweepConfig":
        """AR(p) study at desk scale; full scale is 250 processes with p up to 15."""
        return cls(**{"experiment": "ar_sweep", **kw})

    @classmethod
    def arma22_sweep(cls, **kw) -> "SweepConfig":
        fixed = IterationPolicy(50, "fixed", 0.0)
        base = dict(experiment="arma22_sweep", n_processes=50, series_length=1500, sigma2=0.01,
                    order_range=(2, 2), ma_order=2, eqm_policy=fixed, em_policy=fixed)
        return cls(**{**base, **kw})

    @classmethod
    def arma22_case(cls, **kw) -> "SweepConfig":
        """One fixed ARMA(2,2) realisation, ``n_processes`` random masks per fraction."""
        pol = IterationPolicy(50, "loglik", 1e-6)
        base = dict(experiment="arma22_case", n_processes=10, series_length=1500,
                    sigma2=CASE_PARAMS.sigma2, order_range=(2, 2), ma_order=2,
                    eqm_policy=pol, em_policy=pol)
        return cls(**{**base, **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    process_id: int
    algorithm: str
    missing_fraction: float
    fit: float
    wall_time: float
    iterations: int
    final_loglik: float
    clamp_count: int = 0
    termination: str = "max_iters"
    error: Optional[str] = field(default=None, compare=False)

    def row(self) -> list[str]:
        return [str(self.process_id), self.algorithm, _fmt(self.missing_fraction), _fmt(self.fit),
                _fmt(self.wall_time), str(self.iterations), _fmt(self.final_loglik),
                str(self.clamp_count), self.termination]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def fit_metric(y_true, y_pred) -> float:
    """100 (1 - ||y - yhat|| / ||y - mean(y)||), in percent."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size < 2:
        raise ValueError("fit needs two equal-length vectors of length >= 2")
    denom = np.linalg.norm(y_true - y_true.mean())
    if denom == 0.0:
        raise UndefinedFitError("fit is undefined for a constant reference signal")
    return float(100.0 * (1.0 - np.linalg.norm(y_true - y_pred) / denom))


def _seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def _process(cfg: SweepConfig, pid: int) -> tuple[ArmaParams, np.ndarray]:
    if cfg.experiment == "arma22_case":
        params = replace(CASE_PARAMS, sigma2=cfg.sigma2)
        return params, simulate_arma(params, cfg.series_length, _seed(cfg.master_seed))
    seed = _seed(cfg.master_seed, pid)
    rng = np.random.default_rng(seed)
    p = int(rng.integers(cfg.order_range[0], cfg.order_range[1] + 1))
    params = random_stable_arma(p, cfg.ma_order, cfg.sigma2, seed)
    return params, simulate_arma(params, cfg.series_length, seed)


def _eqm_config(pol: IterationPolicy) -> EqmConfig:
    return EqmConfig(max_iters=pol.max_iters, criterion=pol.criterion, tol=pol.tol)


def run_problem(prob: ExperimentProblem, cfg: SweepConfig, pid: int, frac: float) -> list[RunResult]:
    """Run naive, EqM and EM on one masked realisation."""
    rec, orders = prob.estimation, prob.orders
    out = []

    def result(alg, **kw):
        return RunResult(pid, alg, frac, **kw)

    t0 = time.perf_counter()
    try:
        naive = naive_estimate(rec, orders)
    except Exception as exc:  # noqa: BLE001 - recorded in the row
        log.warning("naive fit failed for process %d: %s", pid, exc)
        return [result(alg, fit=math.nan, wall_time=0.0, iterations=0, final_loglik=math.nan,
                       termination="error", error=repr(exc)) for alg in ALGORITHMS]
    t_naive = time.perf_counter() - t0
    model = build_state_space(naive)
    out.append(result("naive", fit=fit_metric(prob.validation, one_step_predictions(model, prob.validation, rec)),
                      wall_time=t_naive, iterations=1, final_loglik=kalman_filter(model, rec).loglik,
                      termination="param_converged"))

    try:
        t0 = time.perf_counter()
        theta, trace = eqm_run(rec, orders, naive, _eqm_config(cfg.eqm_policy))
        elapsed = time.perf_counter() - t0
        model = build_state_space(theta)
        out.append(result("eqm", fit=fit_metric(prob.validation, one_step_predictions(model, prob.validation, rec)),
                          wall_time=elapsed, iterations=max(trace.iterations, 1),
                          final_loglik=trace.final_loglik, clamp_count=trace.clamp_count,
                          termination=trace.termination))
    except Exception as exc:  # noqa: BLE001
        log.warning("eqm failed for process %d: %s", pid, exc)
        out.append(result("eqm", fit=math.nan, wall_time=0.0, iterations=0, final_loglik=math.nan,
                          termination="error", error=repr(exc)))

    try:
        pol = cfg.em_policy
        init = em_init(naive, rec)
        t0 = time.perf_counter()
        ssm, trace = em_run(rec, init.r, init, pol.max_iters, pol.tol, pol.criterion)
        elapsed = time.perf_counter() - t0
        out.append(result("em", fit=fit_metric(prob.validation, one_step_predictions(ssm.model, prob.validation, rec)),
                          wall_time=elapsed, iterations=max(trace.iterations, 1),
                          final_loglik=trace.final_loglik, termination=trace.termination))
    except Exception as exc:  # noqa: BLE001
        log.warning("em failed for process %d: %s", pid, exc)
        out.append(result("em", fit=math.nan, wall_time=0.0, iterations=0, final_loglik=math.nan,
                          termination="error", error=repr(exc)))
    return out


def _task(args: tuple[SweepConfig, int, int]) -> list[RunResult]:
    cfg, pid, fi = args
    params, series = _process(cfg, pid)
    frac = cfg.missing_fractions[fi]
    prob = make_problem(series, frac, _seed(cfg.master_seed, pid, fi), params.orders, params)
    return run_problem(prob, cfg, pid, frac)


def run_experiment(cfg: SweepConfig, jobs: int = 1) -> list[RunResult]:
    """Run every (process, fraction) cell; rows ordered by (process, fraction, algorithm)."""
    tasks = [(cfg, pid, fi) for pid in range(cfg.n_processes)
             for fi in range(len(cfg.missing_fractions))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = []
        for t in tasks:
            chunks.append(_task(t))
            log.info("process %d fraction %.2f done", t[1], cfg.missing_fractions[t[2]])
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.process_id, r.missing_fraction, order[r.algorithm]))
    return rows


def aggregate(results: list[RunResult]) -> list[dict]:
    """Mean and 95% normal-approximation half-width per (algorithm, fraction)."""
    groups: dict[tuple[str, float], list[RunResult]] = {}
    for r in results:
        groups.setdefault((r.algorithm, r.missing_fraction), []).append(r)
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    out = []
    for (alg, frac) in sorted(groups, key=lambda k: (order.get(k[0], 99), k[1])):
        rows = [r for r in groups[(alg, frac)] if r.error is None]
        entry = {"algorithm": alg, "missing_fraction": frac, "n": len(rows)}
        for name in ("fit", "wall_time", "iterations", "final_loglik"):
            vals = np.array([getattr(r, name) for r in rows], dtype=float)
            mean = float(vals.mean()) if vals.size else math.nan
            half = float(1.96 * vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            entry[f"{name}_mean"] = mean
            entry[f"{name}_ci95"] = half
        out.append(entry)
    return out


def _aggregate_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}_aggregate{path.suffix}")


def emit_report(results: list[RunResult], fmt: str, path, config: Optional[SweepConfig] = None
                ) -> tuple[Path, Path]:
    """Write per-run rows and the aggregate table; returns both paths."""
    if not results:
        raise ValueError("no results to report")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    agg_path = _aggregate_path(path)
    agg = aggregate(results)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in results:
                w.writerow(r.row())
        with open(agg_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = list(agg[0].keys())
            w.writerow(keys)
            for e in agg:
                w.writerow([_fmt(v) if isinstance(v, float) else str(v) for v in e.values()])
    else:
        rows = [dict(zip(CSV_COLUMNS, (r.process_id, r.algorithm, r.missing_fraction, r.fit,
                                       r.wall_time, r.iterations, r.final_loglik, r.clamp_count,
                                       r.termination))) for r in results]
        doc = {"config": config.to_dict() if config else None, "rows": rows}
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        agg_path.write_text(json.dumps({"config": doc["config"], "aggregate": agg}, indent=2) + "\n",
                            encoding="utf-8")
    return path, agg_path
