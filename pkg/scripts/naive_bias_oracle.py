"""Brute-force Monte-Carlo reference for the DGP-CONF naive bias.

Simulates ``draws`` units from the DGP's selection and control-outcome model
(noise-free) and reports the difference in mean control outcome between the
treated and untreated, with its Monte-Carlo standard error. The printed value
is frozen into the test suite.

    python scripts/naive_bias_oracle.py --draws 10000000 --selection 1.0
"""

import argparse

import numpy as np
from scipy.special import expit


def simulate(draws, selection, seed, chunk=1_000_000):
    rng = np.random.default_rng(seed)
    s1 = s0 = q1 = q0 = 0.0
    n1 = n0 = 0
    remaining = draws
    while remaining:
        m = min(chunk, remaining)
        x1 = rng.normal(size=m)
        x2 = rng.normal(size=m)
        t = rng.random(m) < expit(selection * x1)
        mu0 = 3 * x1 + x2
        a, b = mu0[t], mu0[~t]
        s1 += a.sum(); q1 += (a * a).sum(); n1 += a.size
        s0 += b.sum(); q0 += (b * b).sum(); n0 += b.size
        remaining -= m
    m1, m0 = s1 / n1, s0 / n0
    v1, v0 = q1 / n1 - m1**2, q0 / n0 - m0**2
    return m1 - m0, np.sqrt(v1 / n1 + v0 / n0)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=10_000_000)
    parser.add_argument("--selection", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=20240601)
    args = parser.parse_args()
    bias, se = simulate(args.draws, args.selection, args.seed)
    print(f"naive bias = {bias:.6f}  (MC std {se:.6f}, draws {args.draws})")


if __name__ == "__main__":
    main()
