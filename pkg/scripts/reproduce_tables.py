#!/usr/bin/env python3
"""Reproduce the headline simulation tables at full scale.

Runs the single-layer and double-layer studies at the reference setting
(selection slope 4, heterogeneity -0.6, n_total 3000, 20% selection) and
prints one row per estimator and variance method: bias, MC SD, average
SE, and both coverage rates. Defaults are sized for a laptop; raise
--reps/--outer for publication-scale replication counts.

Usage:
  python scripts/reproduce_tables.py single [--reps 3000] [--bootstrap-reps 500]
  python scripts/reproduce_tables.py double [--outer 3000] [--inner 10]
"""

import argparse
import os
import time

from trialgen.estimators import ALL_ESTIMATORS, EstimatorId
from trialgen.simulation import (
    MonteCarloConfig,
    ScenarioParams,
    run_double_layer,
    run_single_layer,
)


def reference_params() -> ScenarioParams:
    return ScenarioParams.from_targets(
        alpha1=4.0, beta3=-0.6, pate=-0.3, n_total=3000, alpha0=-3.76,
    )


def print_report(report) -> None:
    header = (f"{'estimator':>10s} {'method':>10s} {'bias':>8s} {'mc_sd':>7s} "
              f"{'ave_se':>7s} {'fin_cov':>7s} {'inf_cov':>7s}")
    print(header)
    print("-" * len(header))
    for row in report.rows:
        print(f"{row.estimator:>10s} {row.variance_method:>10s} "
              f"{row.bias:+8.3f} {row.mc_sd:7.3f} {row.ave_se:7.3f} "
              f"{row.finite_coverage:7.2f} {row.infinite_coverage:7.2f}")
    print(f"completed {report.reps_completed}/{report.reps_requested}, "
          f"skipped {sum(report.skipped.values())}, "
          f"mean delta_p {report.mean_delta_p:.3f}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("design", choices=("single", "double"))
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--outer", type=int, default=300)
    ap.add_argument("--inner", type=int, default=10)
    ap.add_argument("--bootstrap-reps", type=int, default=500)
    ap.add_argument("--bootstrap-subsample", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20250808)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    start = time.time()
    if args.design == "single":
        cfg = MonteCarloConfig(
            estimators=ALL_ESTIMATORS,
            methods=("parametric", "wsb", "rb"),
            bootstrap_reps=args.bootstrap_reps,
            bootstrap_subsample=args.bootstrap_subsample,
            workers=args.workers,
        )
        report = run_single_layer(reference_params(), reps=args.reps,
                                  seed=args.seed, cfg=cfg)
    else:
        cfg = MonteCarloConfig(
            estimators=(EstimatorId.IPW, EstimatorId.SV_ONLY),
            methods=("parametric", "wawsb"),
            bootstrap_reps=200,
            workers=args.workers,
        )
        report = run_double_layer(reference_params(), outer_reps=args.outer,
                                  seed=args.seed, inner_reps=args.inner, cfg=cfg)
    print_report(report)
    print(f"elapsed {time.time() - start:.0f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
