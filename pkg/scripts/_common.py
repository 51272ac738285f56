"""Shared driver for the experiment scripts."""

import argparse
import logging
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from eqmarma.harness import aggregate, emit_report, run_experiment  # noqa: E402


def parser(description: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--processes", type=int, help="number of processes (or masks for the case study)")
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(cfg, args, name: str) -> None:
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    results = run_experiment(cfg, jobs=args.jobs)
    rows, agg_path = emit_report(results, args.format, args.out / f"{name}.{args.format}", cfg)
    print(f"{len(results)} runs in {time.perf_counter() - start:.1f}s -> {rows}, {agg_path}")
    print(f"{'algorithm':>9} {'fraction':>8} {'fit':>14} {'time [s]':>10} {'iters':>7}")
    for e in aggregate(results):
        print(f"{e['algorithm']:>9} {e['missing_fraction']:>8.2f} "
              f"{e['fit_mean']:>7.2f} ±{e['fit_ci95']:>5.2f} {e['wall_time_mean']:>10.3f} "
              f"{e['iterations_mean']:>7.1f}")
