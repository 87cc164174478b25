#!/usr/bin/env python3
"""Selection-distortion experiment grid.

Sweeps the check/estimator correlation and prints conditional moments of the
short and residualized estimators given a passed balance screen, next to the
truncated-normal oracle. Writes the full results as JSON when --output is
given.
"""

import argparse
import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from residcheck.dgps import GaussianPairDGP  # noqa: E402
from residcheck.report import json_bytes  # noqa: E402
from residcheck.selection import (  # noqa: E402
    SelectionConfig,
    run_conditional_experiment,
    truncated_oracle,
    two_sided_t_rule,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rhos", default="0.0,0.3,0.5,0.8")
    parser.add_argument("--threshold", type=float, default=1.96)
    parser.add_argument("--n", type=int, default=400)
    parser.add_argument("--reps", type=int, default=50_000)
    parser.add_argument("--seed", type=int, default=20250809)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--output", default=None)
    args = parser.parse_args()

    rhos = [float(tok) for tok in args.rhos.split(",") if tok.strip()]
    print(f"n = {args.n}, reps = {args.reps}, two-sided threshold = {args.threshold}\n")
    header = (
        f"{'rho':>5} {'pass rate':>10} {'var(Zs)|pass':>14} {'oracle':>9} "
        f"{'var(Zr)|pass':>14} {'target':>9} {'cover(r)|pass':>14}"
    )
    print(header)
    results = {}
    for i, rho in enumerate(rhos):
        config = SelectionConfig(
            dgp=GaussianPairDGP.from_rho(rho),
            rule=two_sided_t_rule(args.threshold),
            n=args.n,
            reps=args.reps,
            seed=args.seed + i,
        )
        stats = run_conditional_experiment(config, threads=args.threads)
        oracle = truncated_oracle(rho, args.threshold) if rho else None
        v_s = stats.estimators["short"]["pass"].variance.value * args.n
        v_r = stats.estimators["residualized"]["pass"].variance.value * args.n
        cover = stats.estimators["residualized"]["pass"].coverage.value
        print(
            f"{rho:>5.2f} {stats.pass_rate:>10.4f} {v_s:>14.4f} "
            f"{(oracle.cond_var_zs if oracle else 1.0):>9.4f} {v_r:>14.4f} "
            f"{1 - rho**2:>9.4f} {cover:>14.4f}"
        )
        results[str(rho)] = stats
    if args.output:
        payload = {"n": args.n, "reps": args.reps, "threshold": args.threshold,
                   "results": results}
        pathlib.Path(args.output).write_bytes(json_bytes(payload))
        print(f"\nwrote {args.output}")


if __name__ == "__main__":
    main()
