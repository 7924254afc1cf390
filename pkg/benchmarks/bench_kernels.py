"""Compare the compiled kernels with the numpy fallback.

Times trajectory sampling and exact lattice evolution on the bundled
reducible configuration and checks that both backends agree.

    python benchmarks/bench_kernels.py [--n 200] [--N 10000] [--steps 100]
"""
import argparse
import time

import numpy as np

from oqwlab._backend import available
from oqwlab.cli import resolve_initial_state
from oqwlab.config import bundled_config, load_config
from oqwlab.evolution import Evolver, Window, init_delta
from oqwlab.trajectory import simulate_endpoints


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200, help="trajectory length")
    ap.add_argument("--N", type=int, default=10_000, help="number of trajectories")
    ap.add_argument("--steps", type=int, default=100, help="evolution steps")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = load_config(bundled_config("reducible"))
    classes = cfg.field_classes()
    rho0 = resolve_initial_state(cfg)
    window = Window.centered(cfg.X0, args.steps + 2)
    results = {}
    for name in available():
        t_traj, X = best_of(lambda: simulate_endpoints(cfg.field, classes, rho0, cfg.X0, args.n, args.N,
                                                       cfg.run.seed, backend=name), args.repeat)
        ev = Evolver(cfg.field, classes, window, backend=name)
        t_evo, state = best_of(lambda: ev.run(init_delta(rho0, cfg.X0, window), args.steps), args.repeat)
        results[name] = (t_traj, t_evo, X, state)
        print(f"{name:7s} trajectories n={args.n} N={args.N}: {t_traj:8.3f} s   "
              f"evolution {args.steps} steps on {window.shape}: {t_evo:8.3f} s")

    if len(results) == 2:
        c, p = results["cython"], results["python"]
        same_X = np.array_equal(c[2], p[2])
        gap = float(np.max(np.abs(c[3].rho - p[3].rho)))
        print(f"speedup: trajectories {p[0] / c[0]:.1f}x, evolution {p[1] / c[1]:.1f}x")
        print(f"agreement: endpoints identical={same_X}, max state difference {gap:.1e}")
    else:
        print("compiled kernels unavailable; only the fallback was timed")


if __name__ == "__main__":
    main()
