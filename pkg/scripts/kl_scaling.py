"""Mean KL between consecutive policies for K in {1, 2, 4}, per training mode.

    python3 scripts/kl_scaling.py --mode param_kfold --iterations 50 --out kl_param.csv

Writes one row per (k, iteration) with the KL mean and population std over seeds.
"""

import argparse
import csv

import numpy as np

from kfoldpg.envs import make_env
from kfoldpg.kfold import RunConfig, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="param_kfold",
                    choices=["param_kfold", "param_kfold_scaled", "grad_kfold"])
    ap.add_argument("--ks", default="1,2,4")
    ap.add_argument("--env", default="pointmass2d")
    ap.add_argument("--horizon", type=int, default=100)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--out", default="kl_scaling.csv")
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    env = make_env(args.env, args.horizon)
    rows = []
    for k in (int(x) for x in args.ks.split(",")):
        # k = 1 falls back to the classic loop inside run()
        kls = np.array([[m.mean_kl for m in run(RunConfig(mode=args.mode, k=k, horizon=args.horizon,
                                                         sample_budget=args.budget,
                                                         iterations=args.iterations, seed=s), env).metrics]
                        for s in seeds])
        for i in range(kls.shape[1]):
            rows.append((k, i + 1, repr(float(kls[:, i].mean())), repr(float(kls[:, i].std()))))
        first = 10 if kls.shape[1] >= 10 else 1
        print(f"k={k}: mean KL over iterations {first}-{kls.shape[1]} = {kls[:, first - 1:].mean():.5f}")

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("k", "iteration", "kl_mean", "kl_std"))
        w.writerows(rows)
    print(args.out)


if __name__ == "__main__":
    main()
