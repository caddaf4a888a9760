"""Time the compiled stepping kernel against the pure-Python engine.

Runs each bundled scenario with both engines, reports best-of-N wall times
and the largest state deviation between the two trajectories.
"""

import argparse
import time

import numpy as np

from allocnet import config
from allocnet.dynamics import HAVE_KERNEL, simulate


def best_time(scenario, engine, repeats):
    traj = None
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        traj = simulate(scenario, engine=engine)
        best = min(best, time.perf_counter() - t0)
    return traj, best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("scenarios", nargs="*", default=["example1", "example2"],
                        help="bundled names or scenario file paths")
    parser.add_argument("--repeats", type=int, default=3,
                        help="take the best of this many runs (default 3)")
    args = parser.parse_args()

    if not HAVE_KERNEL:
        print("compiled kernel not built; timing the python engine only")

    for name in args.scenarios:
        scenario = config.build_scenario(config.resolve_scenario(name))
        steps = int(round(scenario.horizon / scenario.h))
        print(f"\n{name}: {scenario.problem.agent_count} agents, "
              f"{steps} steps of h={scenario.h:g} ({scenario.algorithm})")
        traj_py, t_py = best_time(scenario, "python", args.repeats)
        print(f"  python   {t_py * 1e3:9.2f} ms")
        if HAVE_KERNEL:
            traj_c, t_c = best_time(scenario, "compiled", args.repeats)
            dev = max(
                float(np.abs(traj_c.x - traj_py.x).max()),
                float(np.abs(traj_c.mu - traj_py.mu).max()),
                float(np.abs(traj_c.eta - traj_py.eta).max()),
            )
            print(f"  compiled {t_c * 1e3:9.2f} ms   speedup x{t_py / t_c:,.1f}   "
                  f"max |state diff| {dev:.1e}")


if __name__ == "__main__":
    main()
