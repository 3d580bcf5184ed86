"""Seed-averaged ATE recovery on a synthetic design with a known effect.

Fits the T-learner and DR learner (shared outcome surfaces) and the three
Bayesian models on ``--seeds`` draws of the DGP and prints the mean, spread
and RMSE of each estimator's ATE against the truth.

    python scripts/oracle_recovery.py --dgp DGP-CONST --n 2000 --seeds 20
"""

import argparse
import time

import numpy as np

from hteffects.bayes import BcfConfig, HlmConfig, fit_bcf, fit_gp, fit_hlm
from hteffects.meta import ate_doubly_robust, cate_t_learner, fit_propensity, fit_t_learner
from hteffects.rng import derive_seed
from hteffects.synthetic import DgpSpec, generate


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dgp", default="DGP-CONST")
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--learner", default="gbr", choices=("lasso", "ridge", "gbr"))
    parser.add_argument("--gp-starts", type=int, default=1)
    parser.add_argument("--bcf-burn-in", type=int, default=200)
    parser.add_argument("--bcf-kept", type=int, default=500)
    parser.add_argument("--skip", default="", help="comma-separated estimators to leave out")
    args = parser.parse_args()
    skip = set(filter(None, args.skip.split(",")))
    bcf_config = BcfConfig(burn_in=args.bcf_burn_in, kept=args.bcf_kept)

    results, clock = {}, {}
    for seed in range(args.seeds):
        ds, truth = generate(DgpSpec(args.dgp, n=args.n, seed=seed))
        rho = fit_propensity(ds, seed=derive_seed(seed, "propensity"))
        fits = {
            "t": lambda: cate_t_learner(pair, ds).ate,
            "dr": lambda: ate_doubly_robust(ds, pair, rho)[0],
            "hlm": lambda: fit_hlm(ds, rho, HlmConfig(), derive_seed(seed, "fit/hlm")).ate,
            "gp": lambda: fit_gp(ds, rho, n_starts=args.gp_starts, seed=derive_seed(seed, "fit/gp"))[1].ate,
            "bcf": lambda: fit_bcf(ds, rho, bcf_config, derive_seed(seed, "fit/bcf")).ate,
        }
        start = time.perf_counter()
        pair = fit_t_learner(ds, args.learner, seed=derive_seed(seed, f"fit/t-{args.learner}"))
        clock["t"] = clock.get("t", 0.0) + time.perf_counter() - start
        for name, fit in fits.items():
            if name in skip:
                continue
            start = time.perf_counter()
            results.setdefault(name, []).append(fit() - truth.ate)
            clock[name] = clock.get(name, 0.0) + time.perf_counter() - start
        print(f"seed {seed}: " + "  ".join(f"{k}={v[-1]:+.3f}" for k, v in results.items()), flush=True)

    print(f"\n{args.dgp}, n={args.n}, {args.seeds} seeds, error = ATE - truth")
    print(f"{'estimator':<10}{'mean err':>10}{'sd':>8}{'rmse':>8}{'sec/seed':>10}")
    for name, errs in results.items():
        e = np.array(errs)
        print(f"{name:<10}{e.mean():>+10.3f}{e.std():>8.3f}{np.sqrt(np.mean(e ** 2)):>8.3f}"
              f"{clock[name] / args.seeds:>10.2f}")


if __name__ == "__main__":
    main()
