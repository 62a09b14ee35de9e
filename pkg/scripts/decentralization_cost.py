"""
Price of the triangular information constraint on a two-player chain as the
coupling from player 1 to player 2 grows.  With no coupling the players are
independent and the triangular optimum equals the centralized one.
"""
import argparse

import numpy as np

from trilqg import optimal_cost, solve_coupled
from trilqg.plant import plant_p2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-coupling", type=float, default=10.0)
    ap.add_argument("--points", type=int, default=11)
    args = ap.parse_args()

    base = plant_p2()
    print(f"{'a21':>8} {'J_opt^2':>10} {'J_cnt^2':>10} {'J_dcnt^2':>10} {'share':>7}")
    for a21 in np.linspace(0.0, args.max_coupling, args.points):
        A = base.A.copy()
        A[1, 0] = a21
        cost = optimal_cost(base.replace(A=A), solve_coupled(base.replace(A=A)))
        share = cost.J_dcnt_sq / cost.J_opt_sq
        print(f"{a21:8.3f} {cost.J_opt_sq:10.5f} {cost.J_cnt_sq:10.5f} {cost.J_dcnt_sq:10.5f} {share:7.2%}")


if __name__ == "__main__":
    main()
