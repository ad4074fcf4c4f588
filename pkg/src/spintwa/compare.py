"""Comparison of trajectory ensembles against exact master-equation results."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .observables import ObservableSeries, SqueezingResult, optimal_squeezing, squeezing_from_moments

_FIRST = ("sx", "sy", "sz")
_SECOND = {"sxx": (0, 0), "syy": (1, 1), "szz": (2, 2)}


@dataclass(frozen=True)
class Tolerances:
    """Pass thresholds.

    ``first`` is in units of S and ``second`` in units of S^2 (None: report
    only).  Squeezing optimum value and time are compared relative to the exact
    optimum (None: report only); ``squeezing_curve`` bounds the relative deviation of xi^2(t) up to
    the exact optimum (None: report only).
    """

    first: float = 0.05
    second: Optional[float] = None
    squeezing: Optional[float] = 0.2
    squeezing_curve: Optional[float] = None


def _z(dev, err):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(dev) / err
    z = np.where(err > 0, z, np.where(np.abs(dev) > 0, np.inf, 0.0))
    return float(np.nanmax(z)) if z.size else 0.0


def compare_series(sim: ObservableSeries, exact: ObservableSeries, tol: Tolerances,
                   squeeze: Optional[SqueezingResult] = None) -> dict:
    """Per-observable maximum deviation, stderr-normalized deviation and verdict."""
    spin = sim.spin
    out = {"observables": {}, "passed": True}
    for a, name in enumerate(_FIRST):
        dev = sim.mean[..., a] - exact.mean[..., a]
        entry = {
            "max_abs_deviation": float(np.max(np.abs(dev))),
            "max_deviation_over_s": float(np.max(np.abs(dev)) / spin),
            "max_stderr_deviation": _z(dev, sim.mean_err[..., a]),
            "tolerance_over_s": tol.first,
        }
        entry["passed"] = entry["max_deviation_over_s"] <= tol.first
        out["observables"][name] = entry
        out["passed"] &= entry["passed"]
    for name, (i, j) in _SECOND.items():
        dev = sim.second[..., i, j] - exact.second[..., i, j]
        entry = {
            "max_abs_deviation": float(np.max(np.abs(dev))),
            "max_deviation_over_s2": float(np.max(np.abs(dev)) / spin ** 2),
            "max_stderr_deviation": _z(dev, sim.second_err[..., i, j]),
            "tolerance_over_s2": tol.second,
        }
        if tol.second is not None:
            entry["passed"] = entry["max_deviation_over_s2"] <= tol.second
            out["passed"] &= entry["passed"]
        out["observables"][name] = entry
    if squeeze is not None:
        sq = compare_squeezing(sim.times, squeeze, exact, tol)
        out["squeezing"] = sq
        out["passed"] &= sq["passed"]
    out["passed"] = bool(out["passed"])
    return out


def compare_squeezing(times, squeeze: SqueezingResult, exact: ObservableSeries, tol: Tolerances,
                      site: int = 0) -> dict:
    """Optimal squeezing and the xi^2 curve up to the exact optimum."""
    times = np.asarray(times)
    ex = squeezing_from_moments(exact.mean, exact.second, exact.spin)[:, site]
    sim = squeeze.xi2[:, site]
    later = times > 0
    ex_opt, ex_t = optimal_squeezing(times, ex, later)
    sim_opt, sim_t = optimal_squeezing(times, sim, later & squeeze.reliable[:, site])
    upto = later & (times <= ex_t)
    rel_curve = np.abs(sim[upto] - ex[upto]) / ex[upto]
    res = {
        "xi2_opt": sim_opt,
        "xi2_opt_exact": ex_opt,
        "t_opt": sim_t,
        "t_opt_exact": ex_t,
        "xi2_opt_rel_deviation": abs(sim_opt - ex_opt) / ex_opt,
        "t_opt_rel_deviation": abs(sim_t - ex_t) / ex_t if ex_t > 0 else float("inf"),
        "curve_max_rel_deviation": float(rel_curve.max()) if rel_curve.size else 0.0,
        "tolerance": tol.squeezing,
        "curve_tolerance": tol.squeezing_curve,
    }
    ok = True
    if tol.squeezing is not None:
        ok = res["xi2_opt_rel_deviation"] <= tol.squeezing and res["t_opt_rel_deviation"] <= tol.squeezing
    if tol.squeezing_curve is not None:
        ok = ok and res["curve_max_rel_deviation"] <= tol.squeezing_curve
    res["passed"] = bool(ok)
    return res
