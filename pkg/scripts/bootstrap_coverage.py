"""Monte-Carlo coverage of the percentile bootstrap interval for the ATE.

Each repetition draws a fresh dataset, bootstraps the chosen meta-learner and
records whether the interval contains the true ATE.

    python scripts/bootstrap_coverage.py --dgp DGP-NULL --n 1000 --reps 100 --estimator t-ridge
"""

import argparse
import time

import numpy as np

from hteffects.inference import DrEstimator, TLearnerEstimator, bootstrap_effect
from hteffects.rng import derive_seed
from hteffects.synthetic import DgpSpec, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dgp", default="DGP-NULL")
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--bootstrap", type=int, default=100)
    parser.add_argument("--ci-level", type=float, default=0.95)
    parser.add_argument("--estimator", default="t-ridge")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    kind, learner = args.estimator.split("-", 1)
    est = TLearnerEstimator(learner) if kind == "t" else DrEstimator(learner)
    covered, widths, errors = 0, [], []
    start = time.perf_counter()
    for rep in range(args.reps):
        ds, truth = generate(DgpSpec(args.dgp, n=args.n, seed=rep))
        res = bootstrap_effect(ds, est, args.bootstrap, args.ci_level,
                               derive_seed(rep, f"fit/{args.estimator}"), args.threads)
        covered += res.ci_low <= truth.ate <= res.ci_high
        widths.append(res.ci_high - res.ci_low)
        errors.append(res.ate - truth.ate)
    elapsed = time.perf_counter() - start
    errors = np.array(errors)
    print(f"{args.estimator} on {args.dgp} n={args.n}: covered {covered}/{args.reps} "
          f"at level {args.ci_level}")
    print(f"mean width {np.mean(widths):.4f}, sd of ATE error {errors.std():.4f}, "
          f"mean error {errors.mean():+.4f}, {elapsed:.0f}s")


if __name__ == "__main__":
    main()
