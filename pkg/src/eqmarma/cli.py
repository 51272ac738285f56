"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .em import em_init, em_run, naive_estimate
from .eqm import EqmConfig, eqm_run
from .harness import IterationPolicy, SweepConfig, emit_report, run_experiment
from .model import ArmaParams, ObservationRecord, random_stable_arma, simulate_arma


class UsageError(Exception):
    pass


class InputFormatError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _orders(text: str) -> tuple[int, int]:
    try:
        p, q = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'p,q', got {text!r}") from None
    if p < 0 or q < 0:
        raise argparse.ArgumentTypeError("orders must be non-negative")
    return p, q


def read_series(path) -> ObservationRecord:
    """One value per line; a blank line is a missing sample; ``#`` lines are comments."""
    values: list[Optional[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if s.startswith("#"):
                continue
            if not s:
                values.append(None)
                continue
            try:
                v = float(s)
            except ValueError:
                raise InputFormatError(f"{path}:{lineno}: not a number: {s!r}") from None
            if not np.isfinite(v):
                raise InputFormatError(f"{path}:{lineno}: non-finite value {s!r}")
            values.append(v)
    return ObservationRecord.from_values(values)


def write_series(y, out) -> None:
    text = "".join(f"{_fmt(v)}\n" for v in y)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# Config-file keys and the SweepConfig / IterationPolicy field they set.
CONFIG_KEYS = {
    "sweep.experiment": str,
    "sweep.n_processes": int,
    "sweep.series_length": int,
    "sweep.sigma2": float,
    "sweep.missing_fractions": lambda s: tuple(_floats(s)),
    "sweep.order_min": int,
    "sweep.order_max": int,
    "sweep.ma_order": int,
    "sweep.master_seed": int,
    "eqm.max_iters": int,
    "eqm.criterion": str,
    "eqm.tol": float,
    "em.max_iters": int,
    "em.criterion": str,
    "em.tol": float,
}


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed values."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (t.strip() for t in s.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = CONFIG_KEYS[key](val)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def sweep_config(base: SweepConfig, values: dict) -> SweepConfig:
    sweep = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("sweep.")}
    lo, hi = base.order_range
    lo = sweep.pop("order_min", lo)
    hi = sweep.pop("order_max", hi)
    kw = dict(sweep, order_range=(lo, hi))
    for alg in ("eqm", "em"):
        pol = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(alg + ".")}
        if pol:
            kw[f"{alg}_policy"] = replace(getattr(base, f"{alg}_policy"), **pol)
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _flag_overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["sweep.master_seed"] = args.seed
    if getattr(args, "max_iters", None) is not None:
        out["eqm.max_iters"] = out["em.max_iters"] = args.max_iters
    if getattr(args, "tol", None) is not None:
        out["eqm.tol"] = out["em.tol"] = args.tol
    if getattr(args, "criterion", None) is not None:
        out["eqm.criterion"] = out["em.criterion"] = args.criterion
    if getattr(args, "fractions", None) is not None:
        out["sweep.missing_fractions"] = tuple(args.fractions)
    return out


def cmd_simulate(args) -> int:
    q = args.q if args.q is not None else len(args.lam or [])
    p = args.p if args.p is not None else len(args.phi or [])
    if args.phi is None and args.lam is None:
        params = random_stable_arma(p, q, args.sigma2, args.seed)
    else:
        phi = args.phi or []
        lam = args.lam or []
        if len(phi) != p or len(lam) != q:
            raise UsageError("--phi/--lambda lengths must match --p/--q")
        params = ArmaParams(phi, lam, args.sigma2)
    write_series(simulate_arma(params, args.n, args.seed), args.out)
    return 0


def _print_arma(params: ArmaParams, out) -> None:
    out.write("phi = " + ",".join(_fmt(v) for v in params.phi) + "\n")
    out.write("lambda = " + ",".join(_fmt(v) for v in params.lam) + "\n")
    out.write(f"sigma2 = {_fmt(params.sigma2)}\n")


def cmd_estimate(args) -> int:
    rec = read_series(args.input)
    orders = args.orders
    stdout = sys.stdout
    max_iters = args.max_iters or 100
    tol = 1e-6 if args.tol is None else args.tol
    criterion = args.criterion or "param"
    naive = naive_estimate(rec, orders)
    if args.algorithm == "naive":
        _print_arma(naive, stdout)
        return 0
    if args.algorithm == "eqm":
        theta, trace = eqm_run(rec, orders, naive, EqmConfig(max_iters=max_iters, criterion=criterion,
                                                            tol=tol))
        _print_arma(theta, stdout)
        header = ["iteration", "observed_loglik", "wall_time_s"] + \
            [f"phi{i + 1}" for i in range(orders[0])] + [f"lambda{i + 1}" for i in range(orders[1])] + \
            ["sigma2"]
    else:
        init = em_init(naive, rec)
        theta, trace = em_run(rec, init.r, init, max_iters, tol, criterion)
        r = theta.r
        stdout.write("A = " + ";".join(",".join(_fmt(v) for v in row) for row in theta.A) + "\n")
        stdout.write("Q = " + ";".join(",".join(_fmt(v) for v in row) for row in theta.Q) + "\n")
        stdout.write(f"R = {_fmt(theta.R)}\n")
        header = ["iteration", "observed_loglik", "wall_time_s"] + \
            [f"A{i}{j}" for i in range(r) for j in range(r)] + \
            [f"Q{i}{j}" for i in range(r) for j in range(i, r)] + ["R"]
    stdout.write(f"termination = {trace.termination}\n")
    lines = [",".join(header)]
    for k, (prm, ll, wt) in enumerate(zip(trace.params, trace.observed_loglik, trace.wall_time)):
        lines.append(",".join([str(k), _fmt(ll), _fmt(wt)] + [_fmt(v) for v in prm.as_vector()]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return 0


def _run_sweep(cfg: SweepConfig, args) -> int:
    results = run_experiment(cfg, jobs=args.jobs)
    out = args.out or f"{cfg.experiment}.{args.format}"
    paths = emit_report(results, args.format, out, cfg)
    failed = sum(r.error is not None for r in results)
    sys.stdout.write(f"wrote {paths[0]} and {paths[1]} ({len(results)} rows, {failed} failed)\n")
    return 0


def cmd_sweep(args) -> int:
    presets = {"ar_sweep": SweepConfig.ar_sweep, "arma22_sweep": SweepConfig.arma22_sweep,
               "arma22_case": SweepConfig.arma22_case}
    values = read_config(args.config) if args.config else {}
    experiment = args.experiment or values.get("sweep.experiment", "ar_sweep")
    if experiment not in presets:
        raise UsageError(f"unknown experiment {experiment!r}")
    values.update(_flag_overrides(args))
    if args.processes is not None:
        values["sweep.n_processes"] = args.processes
    values["sweep.experiment"] = experiment
    return _run_sweep(sweep_config(presets[experiment](), values), args)


def cmd_case_study(args) -> int:
    values = _flag_overrides(args)
    values["sweep.n_processes"] = args.runs
    return _run_sweep(sweep_config(SweepConfig.arma22_case(), values), args)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqmarma", description="EqM / EM estimation of ARMA models with missing data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a seeded ARMA realisation, one value per line")
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--phi", type=_floats)
    p.add_argument("--lambda", dest="lam", type=_floats)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    def iteration_flags(sp):
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--criterion", choices=("param", "loglik", "fixed"))

    p = sub.add_parser("estimate", help="estimate an ARMA model from a series file (blank line = missing)")
    p.add_argument("input")
    p.add_argument("--orders", type=_orders, required=True, help="p,q")
    p.add_argument("--algorithm", choices=("eqm", "em", "naive"), default="eqm")
    p.add_argument("--out", help="trace CSV path (default stdout)")
    iteration_flags(p)
    p.set_defaults(func=cmd_estimate)

    def report_flags(sp):
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int)
        iteration_flags(sp)

    p = sub.add_parser("sweep", help="run a simulation sweep")
    p.add_argument("--config", help="key = value file, keys like sweep.n_processes")
    p.add_argument("--experiment", choices=("ar_sweep", "arma22_sweep", "arma22_case"))
    p.add_argument("--processes", type=int)
    p.add_argument("--fractions", type=_floats)
    report_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("case-study", help="fixed ARMA(2,2) realisation with random masks")
    p.add_argument("--fractions", type=_floats, default=[0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--runs", type=int, default=10)
    report_flags(p)
    p.set_defaults(func=cmd_case_study)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except InputFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
