"""Streaming phase-space moments over blocks of trajectories.

Trajectories are processed in fixed blocks.  Each block contributes, per
save time and site, the sums (and sums of squares) of ten c-number features
of (alpha, beta); cross-site products are kept per separation when
requested.  Keeping blocks separate gives a delete-one-block jackknife for
nonlinear estimators and makes the merge order explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

FEATURES = ("sx", "sy", "sz", "n", "sxx", "syy", "szz", "sxy", "sxz", "syz")
SX, SY, SZ, NTOT, SXX, SYY, SZZ, SXY, SXZ, SYZ = range(len(FEATURES))


def site_features(x: np.ndarray) -> np.ndarray:
    """Features per trajectory and site; ``x`` is (B, 2N), result (B, N, 10).

    sx, sy = Re, Im of conj(alpha) beta; sz = (|alpha|^2 - |beta|^2)/2;
    n = |alpha|^2 + |beta|^2; then the six pairwise products of sx, sy, sz.
    """
    a = x[:, 0::2]
    b = x[:, 1::2]
    sig = np.conj(a) * b
    na = a.real ** 2 + a.imag ** 2
    nb = b.real ** 2 + b.imag ** 2
    sx, sy, sz = sig.real, sig.imag, 0.5 * (na - nb)
    return np.stack(
        [sx, sy, sz, na + nb, sx * sx, sy * sy, sz * sz, sx * sy, sx * sz, sy * sz], axis=-1
    )


def separations(n_sites: int) -> int:
    return n_sites // 2 + 1


def pair_counts(n_sites: int, periodic: bool) -> np.ndarray:
    s = np.arange(separations(n_sites))
    return np.full(s.shape, n_sites) if periodic else n_sites - s


def cross_sums(x: np.ndarray, periodic: bool, mask: np.ndarray) -> np.ndarray:
    """Sum over live trajectories and sites n of conj(a_n) b_n a_{n+s} conj(b_{n+s})."""
    sig = np.conj(x[:, 0::2]) * x[:, 1::2]
    sig = sig[mask]
    n_sites = x.shape[1] // 2
    out = np.empty(separations(n_sites), dtype=complex)
    for s in range(len(out)):
        if periodic:
            out[s] = np.sum(sig * np.conj(np.roll(sig, -s, axis=1)))
        else:
            out[s] = np.sum(sig[:, : n_sites - s] * np.conj(sig[:, s:]))
    return out


@dataclass
class EnsembleAccumulator:
    times: np.ndarray
    spin: float
    k: int
    sums: np.ndarray            # (blocks, T, N, F)
    sumsq: Optional[np.ndarray]  # same shape, None once averaged
    counts: np.ndarray          # (blocks, T)
    corr: Optional[np.ndarray] = None  # (blocks, T, n_sep) complex
    periodic: bool = False
    n_sites_raw: int = 0

    @property
    def n_blocks(self) -> int:
        return self.sums.shape[0]

    @property
    def n_sites(self) -> int:
        return self.sums.shape[2]

    @property
    def n_traj(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @classmethod
    def empty(cls, times, n_sites, spin, k, correlations=False, periodic=False):
        t = len(times)
        return cls(
            times=np.asarray(times, dtype=float),
            spin=spin,
            k=int(k),
            sums=np.zeros((0, t, n_sites, len(FEATURES))),
            sumsq=np.zeros((0, t, n_sites, len(FEATURES))),
            counts=np.zeros((0, t)),
            corr=np.zeros((0, t, separations(n_sites)), dtype=complex) if correlations else None,
            periodic=periodic,
            n_sites_raw=n_sites,
        )

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        """Append ``other``'s blocks after this one's (order is significant)."""
        if not np.array_equal(self.times, other.times) or self.n_sites != other.n_sites:
            raise ValueError("cannot merge accumulators over different grids")
        cat = lambda a, b: None if a is None or b is None else np.concatenate([a, b])
        return replace(
            self,
            sums=np.concatenate([self.sums, other.sums]),
            sumsq=cat(self.sumsq, other.sumsq),
            counts=np.concatenate([self.counts, other.counts]),
            corr=cat(self.corr, other.corr),
        )

    # -- reductions ---------------------------------------------------------

    def _means(self, sums, counts, corr):
        with np.errstate(invalid="ignore", divide="ignore"):
            feats = sums / counts[:, None, None]
            c = None
            if corr is not None:
                c = corr / (counts[:, None] * pair_counts(self.n_sites_raw, self.periodic)[None, :])
        return feats, c

    def means(self):
        """(features (T, N, F), cross products (T, n_sep) or None)."""
        return self._means(self.sums.sum(0), self.counts.sum(0),
                           None if self.corr is None else self.corr.sum(0))

    def feature_stderr(self) -> np.ndarray:
        """Trajectory-level standard error of each feature mean, (T, N, F)."""
        if self.sumsq is None:
            raise ValueError("per-trajectory squares are not available after averaging")
        n = self.counts.sum(0)[:, None, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = self.sums.sum(0) / n
            var = self.sumsq.sum(0) / n - mean ** 2
            return np.sqrt(np.maximum(var, 0.0) / (n - 1))

    def jackknife(self, fn: Callable) -> tuple:
        """Estimate ``fn(features, cross)`` and its delete-one-block standard error."""
        tot_s = self.sums.sum(0)
        tot_c = self.counts.sum(0)
        tot_x = None if self.corr is None else self.corr.sum(0)
        value = np.asarray(fn(*self._means(tot_s, tot_c, tot_x)))
        nb = self.n_blocks
        if nb < 2:
            return value, np.full(value.shape, np.nan)
        reps = []
        for b in range(nb):
            reps.append(fn(*self._means(
                tot_s - self.sums[b], tot_c - self.counts[b],
                None if tot_x is None else tot_x - self.corr[b],
            )))
        reps = np.asarray(reps)
        err = np.sqrt((nb - 1) / nb * np.sum((reps - reps.mean(0)) ** 2, axis=0))
        return value, err

    # -- views --------------------------------------------------------------

    def time_average(self, t_start: float, t_stop: float) -> "EnsembleAccumulator":
        """Average block sums over save times in [t_start, t_stop]."""
        sel = (self.times >= t_start - 1e-12) & (self.times <= t_stop + 1e-12)
        if not sel.any():
            raise ValueError(f"no save times in [{t_start}, {t_stop}]")
        m = sel.sum()
        return replace(
            self,
            times=np.array([0.5 * (t_start + t_stop)]),
            sums=self.sums[:, sel].sum(1, keepdims=True) / m,
            sumsq=None,
            counts=self.counts[:, sel].sum(1, keepdims=True) / m,
            corr=None if self.corr is None else self.corr[:, sel].sum(1, keepdims=True) / m,
        )

    def site_average(self) -> "EnsembleAccumulator":
        """Average features over sites (translation-invariant models)."""
        return replace(self, sums=self.sums.mean(2, keepdims=True), sumsq=None)

    def select_site(self, site: int) -> "EnsembleAccumulator":
        sl = slice(site, site + 1)
        return replace(self, sums=self.sums[:, :, sl],
                       sumsq=None if self.sumsq is None else self.sumsq[:, :, sl])
