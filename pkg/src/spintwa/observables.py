"""Spin expectation values from phase-space ensemble moments.

With sigma = conj(alpha) beta, the stochastic c-numbers
S_x = Re sigma, S_y = Im sigma, S_z = (|alpha|^2 - |beta|^2)/2 give first
moments directly for every ordering k.  Second moments need an ordering
correction; for symmetrized products

    <(S_mu S_nu + S_nu S_mu)/2> = <S_mu S_nu>_stoch
                                  + delta_{mu nu} (k <n>/4 - (1 - k^2)/8),

with n = |alpha|^2 + |beta|^2.  Same-site <S^+ S^-> uses

    <S^+ S^-> = <|sigma|^2 + |alpha|^2>_stoch - c (<n> + 1) + c^2,  c = (1 - k)/2,

and products on different sites need no correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ensemble import (
    FEATURES, NTOT, SX, SXX, SXY, SXZ, SY, SYY, SYZ, SZ, SZZ, EnsembleAccumulator,
)

_PAIR = np.array([[SXX, SXY, SXZ], [SXY, SYY, SYZ], [SXZ, SYZ, SZZ]])


def correct_second_moments(feats: np.ndarray, k: int) -> np.ndarray:
    """Quantum symmetrized second moments (..., 3, 3) from feature means (..., F)."""
    table = feats[..., _PAIR]
    shift = k * feats[..., NTOT] / 4 - (1 - k * k) / 8
    return table + shift[..., None, None] * np.eye(3)


def same_site_flip_flop(feats: np.ndarray, k: int) -> np.ndarray:
    """<S^+ S^-> on each site from feature means."""
    c = 0.5 * (1 - k)
    n = feats[..., NTOT]
    return feats[..., SXX] + feats[..., SYY] + 0.5 * n + feats[..., SZ] - c * (n + 1) + c * c


# conj(alpha)^p alpha^q conj(beta)^r beta^s monomials making up each feature
FEATURE_POLYNOMIALS = {
    "sx": {(1, 0, 0, 1): 0.5, (0, 1, 1, 0): 0.5},
    "sy": {(1, 0, 0, 1): -0.5j, (0, 1, 1, 0): 0.5j},
    "sz": {(1, 1, 0, 0): 0.5, (0, 0, 1, 1): -0.5},
    "n": {(1, 1, 0, 0): 1.0, (0, 0, 1, 1): 1.0},
    "sxx": {(2, 0, 0, 2): 0.25, (1, 1, 1, 1): 0.5, (0, 2, 2, 0): 0.25},
    "syy": {(2, 0, 0, 2): -0.25, (1, 1, 1, 1): 0.5, (0, 2, 2, 0): -0.25},
    "szz": {(2, 2, 0, 0): 0.25, (1, 1, 1, 1): -0.5, (0, 0, 2, 2): 0.25},
    "sxy": {(2, 0, 0, 2): -0.25j, (0, 2, 2, 0): 0.25j},
    "sxz": {(2, 1, 0, 1): 0.25, (1, 0, 1, 2): -0.25, (1, 2, 1, 0): 0.25, (0, 1, 2, 1): -0.25},
    "syz": {(2, 1, 0, 1): -0.25j, (1, 0, 1, 2): 0.25j, (1, 2, 1, 0): 0.25j, (0, 1, 2, 1): -0.25j},
}


def features_from_monomials(moments: dict) -> np.ndarray:
    """Feature means (F,) from exact monomial moments keyed (p, q, r, s)."""
    out = np.empty(len(FEATURES))
    for i, name in enumerate(FEATURES):
        val = sum(c * moments[key] for key, c in FEATURE_POLYNOMIALS[name].items())
        out[i] = np.real(val)
    return out


@dataclass
class ObservableSeries:
    times: np.ndarray
    spin: float
    mean: np.ndarray          # (T, N, 3)
    mean_err: np.ndarray
    second: np.ndarray        # (T, N, 3, 3) symmetrized
    second_err: np.ndarray
    variance: np.ndarray      # (T, N, 3)
    variance_err: np.ndarray
    n_traj: np.ndarray        # (T,)

    @property
    def n_sites(self) -> int:
        return self.mean.shape[1]

    @classmethod
    def exact(cls, times, spin, first, second):
        """Series from exact moments; errors are zero."""
        first = np.asarray(first, dtype=float)
        second = np.asarray(second, dtype=float)
        var = np.diagonal(second, axis1=-2, axis2=-1) - first ** 2
        zeros = np.zeros_like
        return cls(np.asarray(times, float), spin, first, zeros(first), second, zeros(second),
                   var, zeros(var), np.zeros(len(times)))


def first_moments(acc: EnsembleAccumulator):
    """(<S_x>, <S_y>, <S_z>) per time and site with standard errors."""
    feats, _ = acc.means()
    mean = feats[..., [SX, SY, SZ]]
    if acc.sumsq is not None:
        err = acc.feature_stderr()[..., [SX, SY, SZ]]
    else:
        _, err = acc.jackknife(lambda f, c: f[..., [SX, SY, SZ]])
    return mean, err


def second_moments(acc: EnsembleAccumulator):
    """Symmetrized <S_mu S_nu> (T, N, 3, 3) with jackknife errors."""
    return acc.jackknife(lambda f, c: correct_second_moments(f, acc.k))


def variances(acc: EnsembleAccumulator):
    def fn(f, c):
        tab = correct_second_moments(f, acc.k)
        return np.diagonal(tab, axis1=-2, axis2=-1) - f[..., [SX, SY, SZ]] ** 2
    return acc.jackknife(fn)


def observable_series(acc: EnsembleAccumulator) -> ObservableSeries:
    mean, mean_err = first_moments(acc)
    second, second_err = second_moments(acc)
    var, var_err = variances(acc)
    return ObservableSeries(acc.times, acc.spin, mean, mean_err, second, second_err, var,
                            var_err, acc.n_traj)


# -- squeezing ---------------------------------------------------------------


def squeezing_from_moments(mean: np.ndarray, second: np.ndarray, spin: float) -> np.ndarray:
    """min over phi of 2S Var(cos(phi) S_x + sin(phi) S_y) / <S_z>^2."""
    vxx = second[..., 0, 0] - mean[..., 0] ** 2
    vyy = second[..., 1, 1] - mean[..., 1] ** 2
    cxy = second[..., 0, 1] - mean[..., 0] * mean[..., 1]
    lam = 0.5 * (vxx + vyy) - np.sqrt(0.25 * (vxx - vyy) ** 2 + cxy ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2 * spin * lam / mean[..., 2] ** 2


@dataclass
class SqueezingResult:
    times: np.ndarray
    xi2: np.ndarray       # (T, N)
    err: np.ndarray
    reliable: np.ndarray  # |<S_z>| >= 5 stderr


def squeezing_parameter(acc: EnsembleAccumulator) -> SqueezingResult:
    def fn(f, c):
        return squeezing_from_moments(f[..., [SX, SY, SZ]], correct_second_moments(f, acc.k), acc.spin)

    xi2, err = acc.jackknife(fn)
    mean, mean_err = first_moments(acc)
    reliable = np.abs(mean[..., 2]) >= 5 * mean_err[..., 2]
    return SqueezingResult(acc.times, xi2, err, reliable)


def optimal_squeezing(times, xi2, mask: Optional[np.ndarray] = None):
    """(minimum xi^2, time of the minimum) over the masked part of a series."""
    xi2 = np.asarray(xi2, dtype=float)
    if mask is not None:
        xi2 = np.where(mask, xi2, np.inf)
    i = int(np.nanargmin(xi2))
    return float(xi2[i]), float(np.asarray(times)[i])


# -- spatial correlations ----------------------------------------------------


@dataclass
class CorrelationProfile:
    times: np.ndarray
    separations: np.ndarray
    c: np.ndarray            # (T, n_sep), c[:, 0] == 1
    c_err: np.ndarray
    xi_corr: np.ndarray      # (T,), nan where no fit
    residual: np.ndarray


def _profile(f, cross, k):
    c0 = same_site_flip_flop(f, k).mean(axis=-1)  # average over sites
    prof = np.real(cross) / c0[..., None]
    prof[..., 0] = 1.0
    return prof


def fit_correlation_length(s, c):
    """Fit log C(s) = -s / xi over even s with C > 0.

    Returns (xi, rms residual); (nan, nan) with fewer than three usable
    points (s = 0 included).
    """
    s = np.asarray(s)
    c = np.asarray(c, dtype=float)
    use = (s % 2 == 0) & (c > 0)
    if use.sum() < 3:
        return np.nan, np.nan
    x, y = s[use].astype(float), np.log(c[use])
    slope = np.sum(x * y) / np.sum(x * x)
    resid = float(np.sqrt(np.mean((y - slope * x) ** 2)))
    xi = -1.0 / slope if slope < 0 else np.inf
    return float(xi), resid


def correlations(acc: EnsembleAccumulator) -> CorrelationProfile:
    """C(s) = <S^+_n S^-_{n+s}> / <S^+_n S^-_n> averaged over n."""
    if acc.corr is None:
        raise ValueError("ensemble was run without correlations")
    prof, err = acc.jackknife(lambda f, c: _profile(f, c, acc.k))
    s = np.arange(prof.shape[-1])
    fits = [fit_correlation_length(s, row) for row in prof]
    return CorrelationProfile(acc.times, s, prof, err, np.array([f[0] for f in fits]),
                              np.array([f[1] for f in fits]))
