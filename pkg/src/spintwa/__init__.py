"""Stochastic phase-space simulation of dissipative collective spin systems."""

from ._backend import BACKEND, available_backends
from .engine import Diagnostics, InitialState, IntegratorConfig, evolve_ensemble
from .ensemble import EnsembleAccumulator
from .model import (
    Decay,
    Dephasing,
    Gain,
    HeisenbergBond,
    LongitudinalField,
    ModelError,
    OneAxisTwist,
    SpinModel,
    TransverseDrive,
    effective_coupling,
    nearest_neighbor_chain,
    validate,
)
from .sampling import DistributionKind

__version__ = "0.1.0"
