"""Declarative description of coupled collective spins with decay and dephasing.

A :class:`SpinModel` lists N sites of equal spin length S, a set of
Hamiltonian terms and a set of Lindblad dissipators.  Models are immutable
once validated and are what every other part of the package consumes.

Rates and couplings are stored as declared.  When ``rescale_by_2s`` is set,
decay, gain, one-axis twisting and bond couplings are divided by 2S before
use (see :func:`effective_coupling`); drives, fields and dephasing are used
as declared unless a term carries an explicit ``rescale`` override.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

ALL_SITES = "all"

Site = Union[int, str]


class ModelError(ValueError):
    """Raised when a model description is malformed."""


@dataclass(frozen=True)
class TransverseDrive:
    """H = omega * S_x on one site."""

    omega: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class LongitudinalField:
    """H = delta * S_z on one site."""

    delta: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class OneAxisTwist:
    """H = g * S_x**2 on one site."""

    g: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class HeisenbergBond:
    """H = Jx Sx_i Sx_j + Jy Sy_i Sy_j + Jz Sz_i Sz_j."""

    jx: float
    jy: float
    jz: float
    site_i: int
    site_j: int
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class Decay:
    """rate * D[S^-]."""

    rate: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class Gain:
    """rate * D[S^+]."""

    rate: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


@dataclass(frozen=True)
class Dephasing:
    """rate * D[S^z]."""

    rate: float
    site: Site = ALL_SITES
    rescale: Optional[bool] = None


HamiltonianTerm = Union[TransverseDrive, LongitudinalField, OneAxisTwist, HeisenbergBond]
DissipatorTerm = Union[Decay, Gain, Dephasing]
Term = Union[HamiltonianTerm, DissipatorTerm]

# terms rescaled by 1/(2S) when the model-wide flag is on and no override is given
_RESCALED_BY_DEFAULT = (OneAxisTwist, HeisenbergBond, Decay, Gain)

_TERM_ORDER = {
    TransverseDrive: 0,
    LongitudinalField: 1,
    OneAxisTwist: 2,
    HeisenbergBond: 3,
    Decay: 4,
    Gain: 5,
    Dephasing: 6,
}


@dataclass(frozen=True)
class SpinModel:
    n_sites: int
    spin: float
    hamiltonian: tuple = ()
    dissipators: tuple = ()
    boundary: str = "open"
    rescale_by_2s: bool = True
    validated: bool = field(default=False, compare=False)

    @property
    def two_s(self) -> int:
        return int(round(2 * self.spin))

    @property
    def terms(self) -> tuple:
        return tuple(self.hamiltonian) + tuple(self.dissipators)


def _check_finite(term, *values):
    for v in values:
        if not math.isfinite(v):
            raise ModelError(f"non-finite coefficient in {term!r}")


def _expand_site(term, n_sites):
    if term.site == ALL_SITES:
        return [replace(term, site=i) for i in range(n_sites)]
    if isinstance(term.site, bool) or not isinstance(term.site, int):
        raise ModelError(f"site must be an integer or 'all', got {term.site!r}")
    if not 0 <= term.site < n_sites:
        raise ModelError(f"site index {term.site} out of range [0, {n_sites})")
    return [term]


def _check_bond(bond: HeisenbergBond, n_sites: int, boundary: str):
    for s in (bond.site_i, bond.site_j):
        if isinstance(s, bool) or not isinstance(s, int):
            raise ModelError(f"bond sites must be integers, got {s!r}")
        if not 0 <= s < n_sites:
            raise ModelError(f"site index {s} out of range [0, {n_sites})")
    if bond.site_i == bond.site_j:
        raise ModelError(f"bond connects site {bond.site_i} to itself")
    if boundary == "open" and bond.site_i > bond.site_j:
        # directed i -> j with i > j only arises from wrapping around the chain
        raise ModelError(
            f"wrap-around bond ({bond.site_i}, {bond.site_j}) on an open boundary"
        )


def _sort_key(term):
    if isinstance(term, HeisenbergBond):
        sites = (term.site_i, term.site_j)
    else:
        sites = (term.site, -1)
    return (_TERM_ORDER[type(term)], sites)


def validate(model: SpinModel) -> SpinModel:
    """Check a raw model and return its normalized form.

    "all sites" terms are expanded per site and terms are put in a fixed
    order, so validating an already validated model returns an equal model.
    """
    if isinstance(model.n_sites, bool) or not isinstance(model.n_sites, int) or model.n_sites < 1:
        raise ModelError(f"n_sites must be a positive integer, got {model.n_sites!r}")
    two_s = 2 * model.spin
    if not math.isfinite(two_s) or two_s < 1 or abs(two_s - round(two_s)) > 1e-12:
        raise ModelError(f"spin must be a positive half-integer, got {model.spin!r}")
    if model.boundary not in ("open", "periodic"):
        raise ModelError(f"boundary must be 'open' or 'periodic', got {model.boundary!r}")

    n = model.n_sites
    hamiltonian = []
    for term in model.hamiltonian:
        if isinstance(term, HeisenbergBond):
            _check_finite(term, term.jx, term.jy, term.jz)
            _check_bond(term, n, model.boundary)
            hamiltonian.append(term)
        elif isinstance(term, (TransverseDrive, LongitudinalField, OneAxisTwist)):
            _check_finite(term, *(getattr(term, f) for f in ("omega", "delta", "g") if hasattr(term, f)))
            hamiltonian.extend(_expand_site(term, n))
        else:
            raise ModelError(f"not a Hamiltonian term: {term!r}")

    dissipators = []
    for term in model.dissipators:
        if not isinstance(term, (Decay, Gain, Dephasing)):
            raise ModelError(f"not a dissipator: {term!r}")
        _check_finite(term, term.rate)
        if term.rate < 0:
            raise ModelError(f"negative rate {term.rate} in {term!r}")
        dissipators.extend(_expand_site(term, n))

    return SpinModel(
        n_sites=n,
        spin=float(round(two_s)) / 2,
        hamiltonian=tuple(sorted(hamiltonian, key=_sort_key)),
        dissipators=tuple(sorted(dissipators, key=_sort_key)),
        boundary=model.boundary,
        rescale_by_2s=bool(model.rescale_by_2s),
        validated=True,
    )


def is_rescaled(model: SpinModel, term: Term) -> bool:
    if term.rescale is not None:
        return bool(term.rescale)
    return model.rescale_by_2s and isinstance(term, _RESCALED_BY_DEFAULT)


def effective_coupling(model: SpinModel, term: Term, value: float | None = None) -> float:
    """Coupling actually entering the equations of motion.

    ``value`` defaults to the term's primary coefficient (rate, omega, delta
    or g); pass it explicitly for the three bond couplings.
    """
    if value is None:
        for name in ("rate", "omega", "delta", "g"):
            if hasattr(term, name):
                value = getattr(term, name)
                break
        else:
            raise ModelError(f"{term!r} has several couplings; pass value explicitly")
    if is_rescaled(model, term):
        return value / (2 * model.spin)
    return value


def nearest_neighbor_chain(
    n_sites: int,
    spin: float,
    jx: float,
    jy: float,
    jz: float,
    decay: float = 0.0,
    boundary: str = "periodic",
    rescale_by_2s: bool = True,
) -> SpinModel:
    """Heisenberg chain with uniform per-site decay.

    Bonds run (i, i+1); with a periodic boundary the closing bond is
    (N-1, 0).  For N = 2 only a single bond is added so the pair is not
    coupled twice.
    """
    bonds = [HeisenbergBond(jx, jy, jz, i, i + 1) for i in range(n_sites - 1)]
    if boundary == "periodic" and n_sites > 2:
        bonds.append(HeisenbergBond(jx, jy, jz, n_sites - 1, 0))
    dissipators = (Decay(decay),) if decay > 0 else ()
    return validate(
        SpinModel(
            n_sites=n_sites,
            spin=spin,
            hamiltonian=tuple(bonds),
            dissipators=dissipators,
            boundary=boundary,
            rescale_by_2s=rescale_by_2s,
        )
    )


# ---------------------------------------------------------------------------
# JSON mapping

_TERM_TYPES = {
    "transverse_drive": (TransverseDrive, ("omega",), ("site", "rescale")),
    "longitudinal_field": (LongitudinalField, ("delta",), ("site", "rescale")),
    "one_axis_twist": (OneAxisTwist, ("g",), ("site", "rescale")),
    "heisenberg_bond": (HeisenbergBond, ("jx", "jy", "jz", "site_i", "site_j"), ("rescale",)),
    "decay": (Decay, ("rate",), ("site", "rescale")),
    "gain": (Gain, ("rate",), ("site", "rescale")),
    "dephasing": (Dephasing, ("rate",), ("site", "rescale")),
}
_TYPE_NAMES = {cls: name for name, (cls, _, _) in _TERM_TYPES.items()}
_MODEL_KEYS = {"n_sites", "spin", "hamiltonian", "dissipators", "boundary", "rescale_by_2s", "chain"}


def _check_keys(d: dict, required, optional, where: str):
    if not isinstance(d, dict):
        raise ModelError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ModelError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ModelError(f"{where}: missing keys {missing}")


def term_from_dict(d: dict) -> Term:
    if not isinstance(d, dict) or "type" not in d:
        raise ModelError(f"term must be an object with a 'type' key: {d!r}")
    try:
        cls, required, optional = _TERM_TYPES[d["type"]]
    except KeyError:
        raise ModelError(f"unknown term type {d['type']!r}") from None
    body = {k: v for k, v in d.items() if k != "type"}
    _check_keys(body, required, optional, f"term {d['type']!r}")
    for key in required:
        if key.startswith("site"):
            continue
        if isinstance(body[key], bool) or not isinstance(body[key], (int, float)):
            raise ModelError(f"term {d['type']!r}: {key} must be a number")
        body[key] = float(body[key])
    return cls(**body)


def term_to_dict(term: Term) -> dict:
    out = {"type": _TYPE_NAMES[type(term)]}
    for name in term.__dataclass_fields__:
        value = getattr(term, name)
        if name == "rescale" and value is None:
            continue
        out[name] = value
    return out


def _chain_bonds(d: dict, n_sites, boundary) -> list:
    _check_keys(d, ("jx", "jy", "jz"), ("rescale",), "model.chain")
    body = {k: v for k, v in d.items()}
    terms = []
    for i in range(n_sites - 1):
        terms.append(term_from_dict({"type": "heisenberg_bond", **body, "site_i": i, "site_j": i + 1}))
    if boundary == "periodic" and n_sites > 2:
        terms.append(term_from_dict({"type": "heisenberg_bond", **body,
                                     "site_i": n_sites - 1, "site_j": 0}))
    return terms


def model_from_dict(d: dict) -> SpinModel:
    """Build and validate a model from its JSON form; unknown keys are errors.

    ``"chain": {"jx": .., "jy": .., "jz": ..}`` is shorthand for uniform
    nearest-neighbour bonds (closing bond included for a periodic boundary).
    """
    _check_keys(d, ("n_sites", "spin"), _MODEL_KEYS - {"n_sites", "spin"}, "model")
    ham = d.get("hamiltonian", [])
    dis = d.get("dissipators", [])
    if not isinstance(ham, list) or not isinstance(dis, list):
        raise ModelError("model: 'hamiltonian' and 'dissipators' must be lists")
    terms = [term_from_dict(t) for t in ham]
    if "chain" in d:
        n = d["n_sites"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 2:
            raise ModelError("model.chain needs an integer n_sites >= 2")
        terms += _chain_bonds(d["chain"], n, d.get("boundary", "open"))
    return validate(
        SpinModel(
            n_sites=d["n_sites"],
            spin=d["spin"],
            hamiltonian=tuple(terms),
            dissipators=tuple(term_from_dict(t) for t in dis),
            boundary=d.get("boundary", "open"),
            rescale_by_2s=d.get("rescale_by_2s", True),
        )
    )


def model_to_dict(model: SpinModel) -> dict:
    return {
        "n_sites": model.n_sites,
        "spin": model.spin,
        "boundary": model.boundary,
        "rescale_by_2s": model.rescale_by_2s,
        "hamiltonian": [term_to_dict(t) for t in model.hamiltonian],
        "dissipators": [term_to_dict(t) for t in model.dissipators],
    }
