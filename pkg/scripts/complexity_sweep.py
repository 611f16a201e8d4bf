"""Sweep epsilon on one problem and fit the log-log growth of N_eps.

Usage: python3 scripts/complexity_sweep.py --problem rosenbrock --dim 2 --p 2 --out rows.csv
"""
import argparse
import json

import numpy as np

from iarqp import Config, NoiseSpec, SweepSpec, emit, fit_slope, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="quartic")
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--noise", default="none")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--eps-max", type=float, default=1e-2)
    ap.add_argument("--eps-min", type=float, default=1e-5)
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    epsilons = tuple(np.logspace(np.log10(args.eps_max), np.log10(args.eps_min), args.points))
    spec = SweepSpec(args.problem, dim=args.dim, epsilons=epsilons,
                     seeds=tuple(range(args.seeds)),
                     config=Config(p=args.p, q=1, noise=NoiseSpec(args.noise)))
    rows = run_sweep(spec, workers=args.workers)
    for r in rows:
        print(f"eps={r.epsilon:.2e}  mean N={r.mean_N:8.2f}  median N={r.median_N:6.1f}  "
              f"converged={r.frac_converged:.2f}  p*={r.empirical_p_star:.3f}")
    try:
        fit = fit_slope(rows)
        print(json.dumps({"slope": fit.slope, "r_squared": fit.r_squared,
                          "worst_case_exponent": (args.p + 1) / args.p}))
    except ValueError as exc:
        print(f"no slope: {exc}")
    if args.out:
        emit(rows, args.out)


if __name__ == "__main__":
    main()
