#!/usr/bin/env python3
"""Random stable AR(p) processes, N = 1250, missing fractions 0 to 0.5.

Desk scale: 20 processes with p in 1..5. The full study is
``--processes 250 --max-order 15``.
"""

from _common import parser, run

from eqmarma.harness import SweepConfig

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--max-order", type=int, default=5)
    args = ap.parse_args()
    cfg = SweepConfig.ar_sweep(n_processes=args.processes or 20, order_range=(1, args.max_order),
                               master_seed=args.seed)
    run(cfg, args, "ar_sweep")
