#!/usr/bin/env python3
"""Random stable ARMA(2,2) processes, N = 1500, sigma2 = 0.01, 50 iterations each."""

from _common import parser, run

from eqmarma.harness import SweepConfig

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    cfg = SweepConfig.arma22_sweep(n_processes=args.processes or 50, master_seed=args.seed)
    run(cfg, args, "arma22_sweep")
