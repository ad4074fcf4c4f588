"""Run configuration files (JSON).

Schema (unknown keys are rejected at every level)::

    {
      "model": {...},                       # see spintwa.model.model_from_dict
      "distribution": "wigner",             # or "P", "Q", -1, 0, 1
      "integrator": {
        "dt": 0.001, "t_final": 5.0,
        "n_save": 51,                       # or "save_times": [...]
        "n_traj": 1000, "seed": 1, "workers": 1, "block_size": 50,
        "divergence_bound": null, "record_trajectories": false
      },
      "initial_state": {"theta": 3.14159, "phi": 0.0},
      "observables": {"moments": true, "squeezing": false, "correlations": false},
      "steady_state": {"t_start": 40.0, "duration": 10.0},
      "sweep": {"parameter": "model.hamiltonian[0].omega", "values": [0.5, 1.0],
                "oracle": false},           # true adds exact steady-state columns
      "benchmark": {"tolerance": 0.05, "second_moment_tolerance": null,
                    "squeezing_tolerance": 0.2,   # null: report optimum only
                    "squeezing_curve_tolerance": null,
                    "expect_failure": false},
      "options": {"allow_non_wigner_interactions": false, "literal_bond_equation": false,
                  "backend": "auto"},
      "outputs": "results/run"
    }

``dt`` may be omitted, in which case :func:`spintwa.engine.default_dt` is used.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine import InitialState, IntegratorConfig, default_dt
from .model import SpinModel, model_from_dict, model_to_dict
from .sampling import DistributionKind


class ConfigError(ValueError):
    """Malformed run configuration."""


_TOP = {"model", "distribution", "integrator", "initial_state", "observables", "steady_state",
        "sweep", "benchmark", "options", "outputs"}
_INTEGRATOR = {"dt", "t_final", "n_save", "save_times", "n_traj", "seed", "workers", "block_size",
               "divergence_bound", "record_trajectories"}
_OBSERVABLES = {"moments", "squeezing", "correlations"}
_OPTIONS = {"allow_non_wigner_interactions", "literal_bond_equation", "backend"}


def _keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    model: SpinModel
    distribution: DistributionKind
    integrator: IntegratorConfig
    initial: InitialState
    moments: bool = True
    squeezing: bool = False
    correlations: bool = False
    steady_start: float = 40.0
    steady_duration: float = 10.0
    sweep_parameter: Optional[str] = None
    sweep_values: tuple = ()
    sweep_oracle: bool = False
    tolerance: float = 0.05
    second_moment_tolerance: Optional[float] = None
    squeezing_tolerance: Optional[float] = 0.2
    squeezing_curve_tolerance: Optional[float] = None
    expect_failure: bool = False
    allow_non_wigner: bool = False
    literal_bond: bool = False
    backend: str = "auto"
    outputs: Optional[str] = None

    def resolved(self) -> dict:
        """Full configuration with defaults filled in; valid input to :func:`parse_config`."""
        cfg = self.integrator
        out = {
            "model": model_to_dict(self.model),
            "distribution": int(self.distribution),
            "integrator": {
                "dt": cfg.dt,
                "t_final": cfg.t_final,
                "save_times": [float(t) for t in cfg.save_times],
                "n_traj": cfg.n_traj,
                "seed": cfg.master_seed,
                "workers": cfg.n_workers,
                "block_size": cfg.block_size,
                "divergence_bound": cfg.divergence_bound,
                "record_trajectories": cfg.record_trajectories,
            },
            "initial_state": {"theta": self.initial.theta, "phi": self.initial.phi},
            "observables": {"moments": self.moments, "squeezing": self.squeezing,
                            "correlations": self.correlations},
            "steady_state": {"t_start": self.steady_start, "duration": self.steady_duration},
            "benchmark": {"tolerance": self.tolerance,
                          "second_moment_tolerance": self.second_moment_tolerance,
                          "squeezing_tolerance": self.squeezing_tolerance,
                          "squeezing_curve_tolerance": self.squeezing_curve_tolerance,
                          "expect_failure": self.expect_failure},
            "options": {"allow_non_wigner_interactions": self.allow_non_wigner,
                        "literal_bond_equation": self.literal_bond, "backend": self.backend},
        }
        if self.sweep_parameter is not None:
            out["sweep"] = {"parameter": self.sweep_parameter, "values": list(self.sweep_values),
                            "oracle": self.sweep_oracle}
        if self.outputs is not None:
            out["outputs"] = self.outputs
        return out


def _number(v, where, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where} must be a finite number")
    if integer and int(v) != v:
        raise ConfigError(f"{where} must be an integer")
    return int(v) if integer else float(v)


def _optional(d, key, where):
    return None if d.get(key) is None else _number(d[key], f"{where}.{key}")


def _angle(v, where):
    if isinstance(v, list):
        return tuple(_number(x, where) for x in v)
    return _number(v, where)


def parse_config(raw: dict, seed: Optional[int] = None, workers: Optional[int] = None,
                 outputs: Optional[str] = None) -> RunConfig:
    """Validate a configuration dict; CLI overrides take precedence."""
    raw = copy.deepcopy(raw)
    _keys(raw, _TOP, "config")
    if "model" not in raw:
        raise ConfigError("config: missing 'model'")
    try:
        model = model_from_dict(raw["model"])
        dist = DistributionKind.parse(raw.get("distribution", 0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    integ = raw.get("integrator", {})
    _keys(integ, _INTEGRATOR, "integrator")
    if "t_final" not in integ:
        raise ConfigError("integrator: missing 't_final'")
    if seed is not None:
        integ["seed"] = seed
    if workers is not None:
        integ["workers"] = workers
    t_final = _number(integ["t_final"], "integrator.t_final")
    dt = _number(integ["dt"], "integrator.dt") if integ.get("dt") is not None else default_dt(model)
    kw = dict(
        n_traj=_number(integ.get("n_traj", 1000), "integrator.n_traj", integer=True),
        master_seed=_number(integ.get("seed", 0), "integrator.seed", integer=True),
        n_workers=_number(integ.get("workers", 1), "integrator.workers", integer=True),
        block_size=_number(integ.get("block_size", 50), "integrator.block_size", integer=True),
        divergence_bound=_optional(integ, "divergence_bound", "integrator"),
        record_trajectories=bool(integ.get("record_trajectories", False)),
    )
    if kw["master_seed"] < 0:
        raise ConfigError("integrator.seed must be non-negative")
    try:
        if "save_times" in integ:
            if "n_save" in integ:
                raise ConfigError("integrator: give either 'save_times' or 'n_save'")
            times = tuple(_number(t, "integrator.save_times") for t in integ["save_times"])
            integrator = IntegratorConfig(dt=dt, t_final=t_final, save_times=times, **kw)
        else:
            n_save = _number(integ.get("n_save", 101), "integrator.n_save", integer=True)
            integrator = IntegratorConfig.uniform(dt, t_final, n_save, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    init = raw.get("initial_state", {})
    _keys(init, {"theta", "phi"}, "initial_state")
    initial = InitialState(_angle(init.get("theta", 0.0), "initial_state.theta"),
                           _angle(init.get("phi", 0.0), "initial_state.phi"))

    obs = raw.get("observables", {})
    _keys(obs, _OBSERVABLES, "observables")
    ss = raw.get("steady_state", {})
    _keys(ss, {"t_start", "duration"}, "steady_state")
    bench = raw.get("benchmark", {})
    _keys(bench, {"tolerance", "second_moment_tolerance", "squeezing_tolerance",
                  "squeezing_curve_tolerance", "expect_failure"}, "benchmark")
    opts = raw.get("options", {})
    _keys(opts, _OPTIONS, "options")

    backend = opts.get("backend", "auto")
    if backend not in ("auto", "compiled", "python"):
        raise ConfigError(f"options.backend must be auto, compiled or python, got {backend!r}")

    sweep_parameter, sweep_values, sweep_oracle = None, (), False
    if "sweep" in raw:
        sw = raw["sweep"]
        _keys(sw, {"parameter", "values", "oracle"}, "sweep")
        if "parameter" not in sw or "values" not in sw:
            raise ConfigError("sweep: needs 'parameter' and 'values'")
        sweep_parameter = str(sw["parameter"])
        if not isinstance(sw["values"], list):
            raise ConfigError("sweep.values must be a list")
        sweep_values = tuple(_number(v, "sweep.values") for v in sw["values"])
        if not sweep_values:
            raise ConfigError("sweep.values is empty")
        get_path(raw, sweep_parameter)
        sweep_oracle = bool(sw.get("oracle", False))

    return RunConfig(
        raw=raw,
        model=model,
        distribution=dist,
        integrator=integrator,
        initial=initial,
        moments=bool(obs.get("moments", True)),
        squeezing=bool(obs.get("squeezing", False)),
        correlations=bool(obs.get("correlations", False)),
        steady_start=_number(ss.get("t_start", 40.0), "steady_state.t_start"),
        steady_duration=_number(ss.get("duration", 10.0), "steady_state.duration"),
        sweep_parameter=sweep_parameter,
        sweep_values=sweep_values,
        sweep_oracle=sweep_oracle,
        tolerance=_number(bench.get("tolerance", 0.05), "benchmark.tolerance"),
        second_moment_tolerance=_optional(bench, "second_moment_tolerance", "benchmark"),
        squeezing_tolerance=(_optional(bench, "squeezing_tolerance", "benchmark")
                             if "squeezing_tolerance" in bench else 0.2),
        squeezing_curve_tolerance=_optional(bench, "squeezing_curve_tolerance", "benchmark"),
        expect_failure=bool(bench.get("expect_failure", False)),
        allow_non_wigner=bool(opts.get("allow_non_wigner_interactions", False)),
        literal_bond=bool(opts.get("literal_bond_equation", False)),
        backend=backend,
        outputs=outputs if outputs is not None else raw.get("outputs"),
    )


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(raw, dict) and "resolved_config" in raw and "spintwa_version" in raw:
        raw = raw["resolved_config"]  # re-run from a manifest
    return parse_config(raw, **overrides)


# -- sweep parameter paths such as "model.hamiltonian[0].omega" ---------------

_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+)\]")


def _tokens(path: str):
    out = []
    for part in path.split("."):
        m_all = list(_TOKEN.finditer(part))
        if not m_all or "".join(m.group(0) for m in m_all) != part:
            raise ConfigError(f"bad parameter path {path!r}")
        for m in m_all:
            out.append(m.group(1) if m.group(1) is not None else int(m.group(2)))
    return out


def get_path(raw: dict, path: str):
    node = raw
    for tok in _tokens(path):
        try:
            node = node[tok]
        except (KeyError, IndexError, TypeError):
            raise ConfigError(f"sweep parameter {path!r} does not exist in the config") from None
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"sweep parameter {path!r} is not numeric")
    return node


def set_path(raw: dict, path: str, value) -> dict:
    out = copy.deepcopy(raw)
    get_path(out, path)
    toks = _tokens(path)
    node = out
    for tok in toks[:-1]:
        node = node[tok]
    node[toks[-1]] = value
    return out
