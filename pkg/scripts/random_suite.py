"""Synthesize and certify a batch of random triangular plants and print a summary table."""
import argparse
import time

import numpy as np

from trilqg import optimal_cost, solve_coupled
from trilqg.coupled_riccati import residuals
from trilqg.plant import random_valid_plants
from trilqg.verify import certify


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--N", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--max-block", type=int, default=3)
    ap.add_argument("--trials", type=int, default=50)
    args = ap.parse_args()

    plants = random_valid_plants(args.seed, args.count, Ns=tuple(args.N), max_block=args.max_block)
    print(f"{'#':>3} {'N':>2} {'n':>3} {'res':>9} {'cond':>9} {'J_cnt^2':>10} {'J_dcnt^2':>10} "
          f"{'cert':>5} {'worst':>10} {'t[s]':>6}")
    fails = 0
    for k, pl in enumerate(plants):
        t0 = time.perf_counter()
        g = solve_coupled(pl)
        res = residuals(pl, g).max_relative
        cost = optimal_cost(pl, g)
        cert = certify(pl, g, trials=args.trials, seed=k)
        dt = time.perf_counter() - t0
        fails += not cert.ok
        worst = cert.details["perturbation"]["worst_decrease"]
        print(f"{k:>3} {pl.N:>2} {pl.n:>3} {res:9.1e} {g.step2_condition:9.1e} {cost.J_cnt_sq:10.4g} "
              f"{cost.J_dcnt_sq:10.4g} {'ok' if cert.ok else 'FAIL':>5} {worst:10.2e} {dt:6.2f}")
    print(f"\n{len(plants) - fails}/{len(plants)} certificates passed")
    return int(fails > 0)


if __name__ == "__main__":
    raise SystemExit(main())
