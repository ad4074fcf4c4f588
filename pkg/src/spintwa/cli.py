"""Command line interface: ``spintwa simulate|benchmark|sweep --config run.json``.

Exit codes: 0 success, 1 benchmark failed, 2 configuration error,
3 more than 1% of trajectories diverged, 4 exact solver size limit exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import oracle
from .compare import Tolerances, compare_series
from .config import ConfigError, RunConfig, load_config, parse_config, set_path
from .engine import evolve_ensemble
from .io import write_correlations, write_csv, write_json, write_series
from .observables import (
    ObservableSeries,
    correct_second_moments,
    correlations,
    first_moments,
    observable_series,
    second_moments,
    squeezing_parameter,
)
from .rules import InteractionOrderingError

log = logging.getLogger("spintwa")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED, EXIT_ORACLE = 0, 1, 2, 3, 4


def simulate_run(rc: RunConfig):
    return evolve_ensemble(
        rc.model, rc.distribution, rc.integrator, rc.initial,
        correlations=rc.correlations,
        allow_non_wigner=rc.allow_non_wigner,
        literal_bond=rc.literal_bond,
        backend=rc.backend,
    )


def _manifest(command, rc: RunConfig, outputs, extra=None):
    out = {
        "spintwa_version": __version__,
        "command": command,
        "resolved_config": rc.resolved(),
        "seed": rc.integrator.master_seed,
        "outputs": sorted(str(p) for p in outputs),
    }
    out.update(extra or {})
    return out


def _out_dir(rc: RunConfig, default: str) -> Path:
    return Path(rc.outputs if rc.outputs is not None else default)


# -- simulate ---------------------------------------------------------------


def cmd_simulate(rc: RunConfig) -> int:
    out = _out_dir(rc, "results")
    t0 = time.perf_counter()
    acc, diag = simulate_run(rc)
    elapsed = time.perf_counter() - t0
    files = []
    series = observable_series(acc)
    squeeze = squeezing_parameter(acc) if rc.squeezing else None
    files.append(write_series(out / "observables.csv", series, squeeze))
    if rc.correlations:
        files.append(write_correlations(out / "correlations.csv", correlations(acc)))
    files.append(write_json(out / "diagnostics.json", diag.summary()))
    files.append(write_json(out / "manifest.json", _manifest("simulate", rc, files + [out / "manifest.json"])))
    log.info("simulated %d trajectories in %.2fs", rc.integrator.n_traj, elapsed)
    return EXIT_DIVERGED if diag.warning else EXIT_OK


# -- benchmark --------------------------------------------------------------


def exact_series(rc: RunConfig) -> ObservableSeries:
    times = rc.integrator.times()
    rho0 = oracle.initial_state(rc.model, rc.initial.theta, rc.initial.phi)
    first, second = oracle.expectation_series(rc.model, rho0, times,
                                              positivity_every=max(1, len(times) // 10))
    return ObservableSeries.exact(times, rc.model.spin, first, second)


def cmd_benchmark(rc: RunConfig) -> int:
    out = _out_dir(rc, "results")
    oracle.check_dimension(rc.model)
    acc, diag = simulate_run(rc)
    series = observable_series(acc)
    squeeze = squeezing_parameter(acc) if rc.squeezing else None
    exact = exact_series(rc)
    tol = Tolerances(rc.tolerance, rc.second_moment_tolerance, rc.squeezing_tolerance,
                     rc.squeezing_curve_tolerance)
    report = compare_series(series, exact, tol, squeeze)
    passed = report["passed"]
    if rc.expect_failure:
        report["status"] = "expected_failure" if not passed else "unexpected_pass"
        code = EXIT_OK if not passed else EXIT_FAIL
    else:
        report["status"] = "pass" if passed else "fail"
        code = EXIT_OK if passed else EXIT_FAIL
    files = [
        write_series(out / "observables.csv", series, squeeze),
        write_series(out / "oracle.csv", exact),
        write_json(out / "benchmark.json", report),
        write_json(out / "diagnostics.json", diag.summary()),
    ]
    files.append(write_json(out / "manifest.json",
                            _manifest("benchmark", rc, files + [out / "manifest.json"])))
    for name, entry in report["observables"].items():
        verdict = "" if "passed" not in entry else ("ok" if entry["passed"] else "FAIL")
        dev = entry.get("max_deviation_over_s", entry.get("max_deviation_over_s2"))
        print(f"{name:4s} max dev {dev:.4g} (z {entry['max_stderr_deviation']:.3g}) {verdict}")
    if "squeezing" in report:
        sq = report["squeezing"]
        print(f"xi2_opt {sq['xi2_opt']:.4g} vs {sq['xi2_opt_exact']:.4g}, "
              f"t_opt {sq['t_opt']:.4g} vs {sq['t_opt_exact']:.4g}")
    print(f"benchmark: {report['status']}")
    if diag.warning:
        return EXIT_DIVERGED
    return code


# -- sweep ------------------------------------------------------------------


_SS_FIRST = ("sx", "sy", "sz")
_SS_SECOND = ("sxx", "syy", "szz")


def sweep_header(rc: RunConfig) -> list:
    head = ["value", "n_traj", "diverged_fraction"]
    for name in _SS_FIRST + _SS_SECOND:
        head += [name, f"{name}_err"]
    for a in "xyz":
        head += [f"var_{a}", f"var_{a}_err"]
    if rc.correlations:
        head += ["xi_corr"]
    if rc.sweep_oracle:
        head += [f"exact_{n}" for n in _SS_FIRST + _SS_SECOND]
    return head


def sweep_point(rc: RunConfig, value: float) -> dict:
    """Steady-state estimate at one sweep value (time average after ``steady_start``)."""
    acc, diag = simulate_run(rc)
    t0, t1 = rc.steady_start, rc.steady_start + rc.steady_duration
    avg = acc.time_average(t0, t1)
    if rc.model.n_sites > 1:
        avg = avg.site_average()
    mean, mean_err = avg.jackknife(lambda f, c: f[..., :3])
    second, second_err = second_moments(avg)
    var = lambda f, c: np.diagonal(correct_second_moments(f, avg.k), axis1=-2, axis2=-1) - f[..., :3] ** 2
    variance, variance_err = avg.jackknife(var)
    row = {
        "value": value,
        "n_traj": int(avg.n_traj[0]),
        "diverged_fraction": diag.diverged_fraction,
        "warning": diag.warning,
    }
    for a, name in enumerate(_SS_FIRST):
        row[name], row[f"{name}_err"] = float(mean[0, 0, a]), float(mean_err[0, 0, a])
    for a, name in enumerate(_SS_SECOND):
        row[name], row[f"{name}_err"] = float(second[0, 0, a, a]), float(second_err[0, 0, a, a])
    for a, ax in enumerate("xyz"):
        row[f"var_{ax}"], row[f"var_{ax}_err"] = float(variance[0, 0, a]), float(variance_err[0, 0, a])
    if rc.correlations:
        row["xi_corr"] = float(correlations(avg).xi_corr[0])
    if rc.sweep_oracle:
        first, sec = oracle.spin_moments(oracle.steady_state(rc.model).data, rc.model)
        first, sec = first.mean(0), sec.mean(0)
        for a, name in enumerate(_SS_FIRST):
            row[f"exact_{name}"] = float(first[a])
        for a, name in enumerate(_SS_SECOND):
            row[f"exact_{name}"] = float(sec[a, a])
    return row


def _point_config(rc: RunConfig, value: float) -> RunConfig:
    raw = set_path(rc.raw, rc.sweep_parameter, value)
    raw.pop("sweep", None)
    point = parse_config(raw)
    return replace(point, integrator=replace(point.integrator, n_workers=1),
                   sweep_oracle=rc.sweep_oracle, outputs=rc.outputs)


def _sweep_job(args):
    rc, value, path = args
    row = sweep_point(_point_config(rc, value), value)
    write_json(path, row)
    return row


def cmd_sweep(rc: RunConfig) -> int:
    if rc.sweep_parameter is None:
        raise ConfigError("sweep: config has no 'sweep' section")
    out = _out_dir(rc, "results")
    if rc.sweep_oracle:
        oracle.check_dimension(rc.model)
    jobs = [(rc, v, out / "points" / f"point_{i:03d}.json") for i, v in enumerate(rc.sweep_values)]
    workers = rc.integrator.n_workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    header = sweep_header(rc)
    files = [write_csv(out / "sweep.csv", header, [[r[h] for h in header] for r in rows])]
    files += [j[2] for j in jobs]
    diag = {"points": [{"value": r["value"], "diverged_fraction": r["diverged_fraction"],
                        "warning": r["warning"]} for r in rows]}
    files.append(write_json(out / "diagnostics.json", diag))
    files.append(write_json(out / "manifest.json", _manifest("sweep", rc, files + [out / "manifest.json"])))
    return EXIT_DIVERGED if any(r["warning"] for r in rows) else EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spintwa", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "integrate trajectories and write observables"),
                        ("benchmark", "compare against the exact master equation"),
                        ("sweep", "steady-state estimates over a parameter scan")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="run configuration (JSON) or a manifest")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--workers", type=int, help="worker processes (overrides the config)")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


COMMANDS = {"simulate": cmd_simulate, "benchmark": cmd_benchmark, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be in [0, 2^64)")
        rc = load_config(args.config, seed=args.seed, workers=args.workers, outputs=args.out)
        return COMMANDS[args.command](rc)
    except (ConfigError, InteractionOrderingError) as exc:
        print(f"spintwa: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except oracle.OracleDimensionError as exc:
        print(f"spintwa: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as exc:
        print(f"spintwa: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
