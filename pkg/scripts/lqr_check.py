"""Train on LQR1D and compare the learned controller with the Riccati optimum.

    python3 scripts/lqr_check.py --seeds 0,1,2 --horizon 100

Cost is the discounted cost of the deterministic mean action, averaged over a
grid of start states in [-1, 1], against P * E[s0^2] from the scalar Riccati
fixed point.
"""

import argparse

import numpy as np

from kfoldpg.envs import LQR1D, lqr_optimal_gain
from kfoldpg.kfold import RunConfig, run
from kfoldpg.numkit import mlp_forward


def controller_cost(policy, gamma, steps=500):
    s0 = np.linspace(-1.0, 1.0, 201)
    s, cost = s0.copy(), np.zeros_like(s0)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            a = np.clip(mlp_forward(policy.mean_net, s[:, None])[:, 0], -4.0, 4.0)
            cost += gamma**t * (s * s + 0.1 * a * a)
            s = s + a
    return float(cost.mean()), float(np.mean(s0**2))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mode", default="grad_kfold")
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--horizon", type=int, default=100)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--gamma", type=float, default=0.99)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()

    gain, p = lqr_optimal_gain(args.gamma)
    print(f"optimal gain {gain:.6f}, value coefficient {p:.6f}")
    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = RunConfig(mode=args.mode, k=args.k, horizon=args.horizon, sample_budget=args.budget,
                        iterations=args.iterations, gamma=args.gamma, seed=seed)
        res = run(cfg, LQR1D(args.horizon))
        cost, ms = controller_cost(res.policy, args.gamma)
        probe = mlp_forward(res.policy.mean_net, np.array([[-1.0], [0.0], [1.0]]))[:, 0]
        print(f"seed {seed}: cost/optimum {cost / (p * ms):.3f}  "
              f"mu(-1,0,1) = {np.round(probe, 3)}  log_std {res.policy.log_std[0]:.2f}")


if __name__ == "__main__":
    main()
