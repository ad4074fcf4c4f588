"""Time the compiled and pure-Python stepping kernels on the same ensemble.

    python benchmarks/bench_backends.py [--spin 100] [--sites 1] [--n-traj 200] [--t-final 1.0]

Both backends integrate identical trajectories (same seeds); the script
reports wall time, trajectory-steps per second and the largest difference
between the two sets of ensemble sums.
"""

import argparse
import json
import time

import numpy as np

from spintwa import available_backends
from spintwa.engine import InitialState, IntegratorConfig, default_dt, evolve_ensemble
from spintwa.model import Decay, Dephasing, SpinModel, TransverseDrive, nearest_neighbor_chain, validate


def build_model(spin, sites):
    if sites == 1:
        return validate(SpinModel(1, spin, (TransverseDrive(2.0),), (Decay(1.0), Dephasing(0.5))))
    return nearest_neighbor_chain(sites, spin, 0.5, -1.5, 0.0, decay=1.0)


def run(model, cfg, backend, repeat):
    best, acc = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        acc, _ = evolve_ensemble(model, 0, cfg, InitialState(0.5, 0.0), backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, acc


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--spin", type=float, default=100)
    p.add_argument("--sites", type=int, default=1)
    p.add_argument("--n-traj", type=int, default=200)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true", help="print a JSON record instead of a table")
    args = p.parse_args(argv)

    model = build_model(args.spin, args.sites)
    dt = default_dt(model)
    cfg = IntegratorConfig.uniform(dt, args.t_final, 11, n_traj=args.n_traj, master_seed=1)
    steps = cfg.n_steps * args.n_traj
    results = {}
    for backend in available_backends():
        elapsed, acc = run(model, cfg, backend, args.repeat)
        results[backend] = {"seconds": elapsed, "traj_steps_per_s": steps / elapsed, "sums": acc.sums}
    record = {
        "spin": args.spin, "sites": args.sites, "n_traj": args.n_traj, "steps": cfg.n_steps,
        "backends": {b: {k: v for k, v in r.items() if k != "sums"} for b, r in results.items()},
    }
    if len(results) == 2:
        a, b = results["compiled"]["sums"], results["python"]["sums"]
        record["max_abs_difference"] = float(np.max(np.abs(a - b)))
        record["speedup"] = results["python"]["seconds"] / results["compiled"]["seconds"]
    if args.json:
        print(json.dumps(record, indent=2))
        return
    print(f"S={args.spin:g}, sites={args.sites}, {args.n_traj} trajectories x {cfg.n_steps} steps")
    for name, r in record["backends"].items():
        print(f"  {name:9s} {r['seconds']:8.3f} s  {r['traj_steps_per_s']:12.4g} traj-steps/s")
    if "speedup" in record:
        print(f"  speedup {record['speedup']:.1f}x, max |difference| {record['max_abs_difference']:.2e}")


if __name__ == "__main__":
    main()
