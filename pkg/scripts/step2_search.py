"""
Random search for plants whose step-2 linear system is singular or badly
conditioned.  Reports the condition-number distribution and the worst plant.
"""
import argparse

import numpy as np

from trilqg.coupled_riccati import step1_sequential, step2_linear
from trilqg.errors import RiccatiError, SingularStep2System
from trilqg.plant import random_plant, save, validate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--max-block", type=int, default=2)
    ap.add_argument("--save-worst", default=None, help="write the worst plant to this JSON path")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    conds, singular, worst = [], 0, (0.0, None)
    while len(conds) + singular < args.count:
        pl = random_plant(rng, args.N, args.max_block)
        if not validate(pl).ok:
            continue
        try:
            cond = step2_linear(pl, step1_sequential(pl)).condition
        except SingularStep2System as exc:
            singular += 1
            cond = exc.condition
        except RiccatiError:
            continue
        conds.append(cond)
        if cond > worst[0]:
            worst = (cond, pl)
    c = np.log10(np.asarray(conds))
    print(f"plants: {len(conds)}  singular: {singular}")
    print(f"log10 condition: median {np.median(c):.2f}  p99 {np.percentile(c, 99):.2f}  max {c.max():.2f}")
    if args.save_worst and worst[1] is not None:
        save(worst[1], args.save_worst)
        print(f"worst plant written to {args.save_worst}")


if __name__ == "__main__":
    main()
