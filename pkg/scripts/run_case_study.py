#!/usr/bin/env python3
"""One fixed ARMA(2,2) realisation (N = 1500, sigma2 = 0.1) under repeated random masks."""

from _common import parser, run

from eqmarma.harness import SweepConfig

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    cfg = SweepConfig.arma22_case(n_processes=args.processes or 10, master_seed=args.seed)
    run(cfg, args, "case_study")
