"""Stochastic equations per model term.

Each Hamiltonian or dissipator term maps onto a :class:`TermRule`: the Ito
drift and noise it contributes to the Schwinger amplitudes after the
truncated-Wigner and positive-diffusion approximations.  Rules are additive,
so a model's equations are the sum over its rules (:func:`assemble`).

Per site (alpha, beta), with k the ordering parameter:

* decay, rate G (already divided by 2S when rescaled)::

    d alpha = -G (|beta|^2 + (1+k)/2) alpha dt + sqrt(G (1-k)/2 (|beta|^2 + (1+k)/2)) (dW1 + i dW2)
    d beta  = +G (|alpha|^2 - (1-k)/2) beta dt + sqrt(G (1+k)/2 (|alpha|^2 - (1-k)/2)) (dW3 + i dW4)

* gain: decay with alpha and beta exchanged.
* dephasing, rate G_phi (k independent, one shared Wiener)::

    d alpha = -G_phi/4 alpha dt + i sqrt(G_phi/2) alpha dW
    d beta  = -G_phi/4 beta dt  - i sqrt(G_phi/2) beta dW

* Hamiltonian terms only contribute mean-field drift.

Negative square-root arguments (possible for k=0) are clamped to zero and
counted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _fallback
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
from .sampling import DistributionKind

KIND_CODES = {
    "drive": _fallback.DRIVE,
    "field": _fallback.FIELD,
    "twist": _fallback.TWIST,
    "bond": _fallback.BOND,
    "decay": _fallback.DECAY,
    "gain": _fallback.GAIN,
    "dephasing": _fallback.DEPHASE,
}
N_WIENERS = {"decay": 4, "gain": 4, "dephasing": 1}


class InteractionOrderingError(ValueError):
    """Interaction terms were requested with the P or Q distribution."""


@dataclass(frozen=True)
class TermRule:
    kind: str
    site_i: int
    site_j: int = -1
    params: tuple = (0.0, 0.0, 0.0)
    k: int = 0
    wiener_offset: int = 0
    literal_bond: bool = False
    term: Optional[object] = None

    @property
    def n_wieners(self) -> int:
        return N_WIENERS.get(self.kind, 0)

    @property
    def is_hamiltonian(self) -> bool:
        return self.n_wieners == 0

    def _apply(self, x, z, dt, sq):
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] < self.wiener_offset + self.n_wieners:
            z = np.pad(z, ((0, 0), (0, self.wiener_offset + self.n_wieners - z.shape[1])))
        dx = np.zeros_like(x)
        clamps = np.zeros(x.shape[0], dtype=np.int64)
        _fallback.apply_rule(KIND_CODES[self.kind], self.site_i, self.site_j,
                             np.asarray(self.params, dtype=float), self.wiener_offset,
                             float(self.k), int(self.literal_bond), x, z, dt, sq, dx, clamps)
        return dx, clamps

    def drift(self, x) -> np.ndarray:
        """Deterministic rate d x / dt at phase point(s) ``x``."""
        squeeze = np.ndim(x) == 1
        dx, _ = self._apply(x, np.zeros((1, 0)), 1.0, 0.0)
        return dx[0] if squeeze else dx

    def noise(self, x, dW):
        """Noise increment for Wiener increments ``dW``; returns (increment, clamp count)."""
        squeeze = np.ndim(x) == 1
        x2 = np.atleast_2d(x)
        dW = np.broadcast_to(np.atleast_2d(np.asarray(dW, dtype=float)), (x2.shape[0], np.shape(dW)[-1]))
        dx, clamps = self._apply(x2, dW, 0.0, 1.0)
        if squeeze:
            return dx[0], int(clamps[0])
        return dx, clamps


def rule_decay(rate: float, k, site: int = 0, wiener_offset: int = 0, term=None) -> TermRule:
    return TermRule("decay", site, params=(rate, 0.0, 0.0), k=int(DistributionKind.parse(k)),
                    wiener_offset=wiener_offset, term=term)


def rule_gain(rate: float, k, site: int = 0, wiener_offset: int = 0, term=None) -> TermRule:
    return TermRule("gain", site, params=(rate, 0.0, 0.0), k=int(DistributionKind.parse(k)),
                    wiener_offset=wiener_offset, term=term)


def rule_dephasing(rate: float, site: int = 0, wiener_offset: int = 0, term=None) -> TermRule:
    return TermRule("dephasing", site, params=(rate, 0.0, 0.0), wiener_offset=wiener_offset, term=term)


def rule_transverse_drive(omega: float, site: int = 0, term=None) -> TermRule:
    return TermRule("drive", site, params=(omega, 0.0, 0.0), term=term)


def rule_longitudinal_field(delta: float, site: int = 0, term=None) -> TermRule:
    return TermRule("field", site, params=(delta, 0.0, 0.0), term=term)


def _require_wigner(k, allow):
    if int(k) != 0 and not allow:
        raise InteractionOrderingError(
            "interaction terms require the Wigner distribution (k=0); "
            "set allow_non_wigner_interactions to override"
        )


def rule_one_axis_twist(g: float, k=0, site: int = 0, allow_non_wigner: bool = False,
                        term=None) -> TermRule:
    """Twist drift; the same for every k, the k-dependent diffusion is dropped."""
    k = DistributionKind.parse(k)
    _require_wigner(k, allow_non_wigner)
    return TermRule("twist", site, params=(g, 0.0, 0.0), k=int(k), term=term)


def rule_heisenberg_bond(jx: float, jy: float, jz: float, site_i: int, site_j: int, k=0,
                         allow_non_wigner: bool = False, literal: bool = False,
                         term=None) -> TermRule:
    """Mean-field bond drift on both sites.

    ``literal=True`` multiplies the Jz part of the beta equation by alpha_n
    instead of beta_n (reproduces a printed variant of the equations; it does
    not conserve |alpha|^2 + |beta|^2).
    """
    k = DistributionKind.parse(k)
    _require_wigner(k, allow_non_wigner)
    return TermRule("bond", site_i, site_j, params=(jx, jy, jz), k=int(k),
                    literal_bond=literal, term=term)


def assemble(model: SpinModel, k, allow_non_wigner: bool = False,
             literal_bond: bool = False) -> list:
    """One rule per model term with effective couplings and Wiener offsets."""
    if not model.validated:
        model = validate(model)
    k = DistributionKind.parse(k)
    rules = []
    offset = 0
    for term in model.terms:
        if isinstance(term, TransverseDrive):
            rule = rule_transverse_drive(effective_coupling(model, term), term.site, term=term)
        elif isinstance(term, LongitudinalField):
            rule = rule_longitudinal_field(effective_coupling(model, term), term.site, term=term)
        elif isinstance(term, OneAxisTwist):
            rule = rule_one_axis_twist(effective_coupling(model, term), k, term.site,
                                       allow_non_wigner, term=term)
        elif isinstance(term, HeisenbergBond):
            j = [effective_coupling(model, term, v) for v in (term.jx, term.jy, term.jz)]
            rule = rule_heisenberg_bond(*j, term.site_i, term.site_j, k, allow_non_wigner,
                                        literal_bond, term=term)
        elif isinstance(term, Decay):
            rule = rule_decay(effective_coupling(model, term), k, term.site, offset, term=term)
        elif isinstance(term, Gain):
            rule = rule_gain(effective_coupling(model, term), k, term.site, offset, term=term)
        elif isinstance(term, Dephasing):
            rule = rule_dephasing(effective_coupling(model, term), term.site, offset, term=term)
        else:  # pragma: no cover - validate() rejects unknown terms
            raise TypeError(term)
        offset += rule.n_wieners
        rules.append(rule)
    return rules


def total_wieners(rules) -> int:
    return sum(r.n_wieners for r in rules)


def wieners_per_site(rules, n_sites: int) -> np.ndarray:
    out = np.zeros(n_sites, dtype=int)
    for r in rules:
        out[r.site_i] += r.n_wieners
    return out


def total_drift(rules, x) -> np.ndarray:
    out = np.zeros_like(np.asarray(x, dtype=complex))
    for r in rules:
        out = out + r.drift(x)
    return out


@dataclass(frozen=True)
class RuleTable:
    """Flat arrays consumed by the steppers."""

    kinds: np.ndarray
    site_a: np.ndarray
    site_b: np.ndarray
    params: np.ndarray
    woff: np.ndarray
    k: float
    literal: int
    n_wieners: int


def pack(rules) -> RuleTable:
    ks = {r.k for r in rules if r.kind in ("decay", "gain", "twist", "bond")}
    k = ks.pop() if len(ks) == 1 else 0
    if ks:
        raise ValueError("rules were assembled for different distributions")
    return RuleTable(
        kinds=np.array([KIND_CODES[r.kind] for r in rules], dtype=np.int32),
        site_a=np.array([r.site_i for r in rules], dtype=np.int32),
        site_b=np.array([r.site_j for r in rules], dtype=np.int32),
        params=np.array([r.params for r in rules], dtype=float).reshape(len(rules), 3),
        woff=np.array([r.wiener_offset for r in rules], dtype=np.int32),
        k=float(k),
        literal=int(any(r.literal_bond for r in rules)),
        n_wieners=total_wieners(rules),
    )
