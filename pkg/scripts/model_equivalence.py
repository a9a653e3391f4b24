"""Compare storage models on random single-device arbitrage instances.

For each instance the binary, linear and penalty models are solved and their
profits printed next to a dynamic-programming reference on a 0.01 MW grid.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from essopt.grid import EssDevice  # noqa: E402
from essopt.problem import build_problem  # noqa: E402
from essopt.solvers import solve  # noqa: E402

from oracles import arbitrage_net, grid_dp_profit  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'#':>3} {'T':>2} {'milp':>10} {'linear':>10} {'penalty':>10} {'dp':>10}")
    worst = 0.0
    for i in range(args.instances):
        T = int(rng.integers(1, 5))
        prices = [float(v) for v in rng.integers(-10, 80, size=T)]
        p_max = int(rng.integers(10, 150)) / 100
        e_max = int(rng.integers(10, 300)) / 100
        dev = EssDevice(2, p_max, p_max, 0.0, e_max, 0.0)
        net = arbitrage_net(prices, dev)
        profits = [-solve(build_problem(net, m, "dc", "arbitrage", prices)).objective
                   for m in ("milp", "linear", "complementarity")]
        dp = grid_dp_profit(prices, dev, net.horizon.dt_hours, 0.01)
        worst = max(worst, max(abs(v - dp) for v in profits))
        print(f"{i:3d} {T:2d} " + " ".join(f"{v:10.4f}" for v in (*profits, dp)))
    print(f"max deviation from dp {worst:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
