"""Fixed-step Euler-Maruyama integration of trajectory ensembles.

Trajectory j draws its initial point and then all of its Wiener increments
from its own counter-based stream seeded by (master_seed, j).  Trajectories
are grouped into blocks of fixed size; blocks may run on several worker
processes but are always merged in index order, so results do not depend
on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .ensemble import EnsembleAccumulator, cross_sums, site_features
from .model import (
    Decay,
    Dephasing,
    Gain,
    HeisenbergBond,
    LongitudinalField,
    OneAxisTwist,
    SpinModel,
    TransverseDrive,
    effective_coupling,
    validate,
)
from .rules import assemble, pack
from .sampling import DistributionKind, sample_trajectory, trajectory_rng

log = logging.getLogger(__name__)

NOISE_CHUNK = 256
DIVERGED_WARNING_FRACTION = 0.01


def characteristic_rate(model: SpinModel) -> float:
    """Largest rate at which amplitudes change for typical |alpha|, |beta| ~ sqrt(2S)."""
    two_s = 2 * model.spin
    rate = 0.0
    bonds = np.zeros(model.n_sites)
    for term in model.terms:
        if isinstance(term, (TransverseDrive, LongitudinalField)):
            rate = max(rate, abs(effective_coupling(model, term)))
        elif isinstance(term, OneAxisTwist):
            rate = max(rate, abs(effective_coupling(model, term)) * two_s)
        elif isinstance(term, HeisenbergBond):
            j = sum(abs(effective_coupling(model, term, v)) for v in (term.jx, term.jy, term.jz))
            bonds[term.site_i] += j * two_s
            bonds[term.site_j] += j * two_s
        elif isinstance(term, (Decay, Gain)):
            rate = max(rate, effective_coupling(model, term) * (two_s + 1))
        elif isinstance(term, Dephasing):
            rate = max(rate, effective_coupling(model, term))
    return max(rate, float(bonds.max(initial=0.0)))


def default_dt(model: SpinModel) -> float:
    rate = characteristic_rate(model)
    return 1e-3 / rate if rate > 0 else 1e-3


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_final: float
    save_times: Sequence[float] = ()
    n_traj: int = 1000
    master_seed: int = 0
    clamp_policy: str = "clamp_to_zero"
    n_workers: int = 1
    block_size: int = 50
    divergence_bound: Optional[float] = None
    record_trajectories: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise ValueError(f"t_final must be non-negative, got {self.t_final}")
        if self.n_traj < 0 or self.block_size < 1 or self.n_workers < 1:
            raise ValueError("n_traj must be >= 0, block_size and n_workers >= 1")
        if self.clamp_policy != "clamp_to_zero":
            raise ValueError(f"unsupported clamp policy {self.clamp_policy!r}")
        ts = np.asarray(self.save_times, dtype=float)
        if ts.size and (np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > self.t_final + 1e-9 * self.dt):
            raise ValueError("save_times must be increasing and inside [0, t_final]")
        self.save_steps()

    @classmethod
    def uniform(cls, dt, t_final, n_save=101, **kw):
        """Evenly spread save times, snapped to the step grid."""
        n_steps = int(round(t_final / dt))
        steps = np.unique(np.round(np.linspace(0, n_steps, n_save)).astype(np.int64))
        return cls(dt=dt, t_final=n_steps * dt, save_times=tuple(float(s * dt) for s in steps), **kw)

    @property
    def n_steps(self) -> int:
        return _to_step(self.t_final, self.dt, "t_final")

    def save_steps(self) -> np.ndarray:
        return np.array([_to_step(t, self.dt, "save time") for t in self.save_times], dtype=np.int64)

    def times(self) -> np.ndarray:
        return np.asarray(self.save_times, dtype=float)


def _to_step(t, dt, what):
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-6 * dt + 1e-12 * abs(t):
        raise ValueError(f"{what} {t} is not a multiple of dt={dt}")
    return n


@dataclass
class Diagnostics:
    clamp_events: int
    spin_length_drift: np.ndarray  # (T, N)
    diverged_trajectories: int
    n_traj: int
    backend: str = ""
    trajectories: Optional[np.ndarray] = field(default=None, repr=False)  # (n_traj, T, 2N)

    @property
    def diverged_fraction(self) -> float:
        return self.diverged_trajectories / self.n_traj if self.n_traj else 0.0

    @property
    def warning(self) -> bool:
        return self.diverged_fraction > DIVERGED_WARNING_FRACTION

    def summary(self) -> dict:
        drift = np.abs(self.spin_length_drift)
        return {
            "clamp_events": int(self.clamp_events),
            "diverged_trajectories": int(self.diverged_trajectories),
            "diverged_fraction": self.diverged_fraction,
            "n_traj": int(self.n_traj),
            "max_abs_spin_length_drift": float(np.nanmax(drift)) if drift.size else 0.0,
            "final_spin_length_drift": [float(v) for v in self.spin_length_drift[-1]]
            if len(self.spin_length_drift) else [],
            "warning": self.warning,
            "backend": self.backend,
        }


@dataclass(frozen=True)
class InitialState:
    theta: object = 0.0
    phi: object = 0.0


@dataclass(frozen=True)
class _BlockJob:
    model: SpinModel
    k: int
    table: object
    config: IntegratorConfig
    initial: InitialState
    start: int
    stop: int
    correlations: bool
    backend: Optional[str]


def _run_block(job: _BlockJob):
    model, cfg, table = job.model, job.config, job.table
    _, advance = _backend.get_advance(job.backend)
    n = job.stop - job.start
    n_amp = 2 * model.n_sites
    rngs = [trajectory_rng(cfg.master_seed, j) for j in range(job.start, job.stop)]
    x = np.empty((n, n_amp), dtype=complex)
    for b, rng in enumerate(rngs):
        x[b] = sample_trajectory(model, job.k, job.initial.theta, job.initial.phi, rng)

    bound = cfg.divergence_bound
    if bound is None:
        bound = 10.0 * math.sqrt(2 * model.spin + 1) + 10.0
    alive = np.ones(n, dtype=np.uint8)
    clamps = np.zeros(n, dtype=np.int64)
    n_w = table.n_wieners
    save = cfg.save_steps()
    t_count = len(save)
    n_sites = model.n_sites
    sums = np.zeros((t_count, n_sites, 10))
    sumsq = np.zeros((t_count, n_sites, 10))
    counts = np.zeros(t_count)
    corr = np.zeros((t_count, n_sites // 2 + 1), dtype=complex) if job.correlations else None
    raw = np.zeros((n, t_count, n_amp), dtype=complex) if cfg.record_trajectories else None
    periodic = model.boundary == "periodic"
    noise = np.empty((n, NOISE_CHUNK, n_w))

    def record(ti):
        mask = alive.astype(bool)
        f = site_features(x[mask])
        sums[ti] = f.sum(0)
        sumsq[ti] = (f * f).sum(0)
        counts[ti] = mask.sum()
        if corr is not None:
            corr[ti] = cross_sums(x, periodic, mask)
        if raw is not None:
            raw[:, ti] = np.where(mask[:, None], x, np.nan)

    step = 0
    for ti, target in enumerate(save):
        while step < target:
            m = min(NOISE_CHUNK, target - step)
            z = noise[:, :m, :]
            if n_w:
                for b, rng in enumerate(rngs):
                    rng.standard_normal(out=noise[b, :m, :])
            advance(x, z, cfg.dt, table.kinds, table.site_a, table.site_b, table.params,
                    table.woff, table.k, table.literal, alive, clamps, bound)
            step += m
        record(ti)
    return sums, sumsq, counts, corr, int(clamps.sum()), int(n - alive.sum()), raw


def evolve_ensemble(
    model: SpinModel,
    k,
    integrator: IntegratorConfig,
    initial: InitialState = InitialState(),
    correlations: bool = False,
    allow_non_wigner: bool = False,
    literal_bond: bool = False,
    backend: Optional[str] = None,
):
    """Integrate ``integrator.n_traj`` trajectories and accumulate moments.

    Returns ``(EnsembleAccumulator, Diagnostics)``; with
    ``record_trajectories`` the raw states are attached to the diagnostics as
    ``trajectories`` (n_traj, T, 2N), diverged entries set to NaN.
    """
    if not model.validated:
        model = validate(model)
    k = DistributionKind.parse(k)
    rules = assemble(model, k, allow_non_wigner=allow_non_wigner, literal_bond=literal_bond)
    table = pack(rules)
    backend_name, _ = _backend.get_advance(backend)
    cfg = integrator
    periodic = model.boundary == "periodic"

    edges = list(range(0, cfg.n_traj, cfg.block_size)) + [cfg.n_traj]
    jobs = [
        _BlockJob(model, int(k), table, cfg, initial, a, b, correlations, backend_name)
        for a, b in zip(edges[:-1], edges[1:])
    ]
    if cfg.n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_workers) as pool:
            results = list(pool.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]

    times = cfg.times()
    acc = EnsembleAccumulator.empty(times, model.n_sites, model.spin, int(k), correlations, periodic)
    if results:
        acc.sums = np.stack([r[0] for r in results])
        acc.sumsq = np.stack([r[1] for r in results])
        acc.counts = np.stack([r[2] for r in results])
        if correlations:
            acc.corr = np.stack([r[3] for r in results])
    clamp_events = sum(r[4] for r in results)
    diverged = sum(r[5] for r in results)

    feats, _ = acc.means()
    half_n = 0.5 * feats[..., 3] if len(times) else np.zeros((0, model.n_sites))
    drift = half_n - half_n[:1] if len(times) else half_n
    diag = Diagnostics(clamp_events, drift, diverged, cfg.n_traj, backend_name)
    if cfg.record_trajectories:
        diag.trajectories = (np.concatenate([r[6] for r in results])
                             if results else np.zeros((0, len(times), 2 * model.n_sites)))
    if diag.warning:
        log.warning("%d of %d trajectories diverged", diverged, cfg.n_traj)
    return acc, diag
