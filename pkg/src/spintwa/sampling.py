"""Initial phase-space points for the Schwinger-boson amplitudes.

Each site carries two complex amplitudes (alpha, beta) for the modes a and b
with S^+ = a^dag b.  A trajectory's state is a length-2N complex vector
ordered (alpha_1, beta_1, alpha_2, beta_2, ...).

The fully polarized state S^z = -S (a in vacuum, b in the Fock state |2S>)
is sampled for the three orderings:

* ``P`` (k=+1): the point (0, sqrt(2S)); the Fock state is replaced by a
  coherent state of equal amplitude.
* ``W`` (k=0): Gaussian around (0, sqrt(2S)) with E|delta|^2 = 1/2 per mode,
  again with the coherent-state replacement.
* ``Q`` (k=-1): exact; |beta|^2 ~ Gamma(2S+1), uniform phases.

Arbitrary spin-coherent states follow by :func:`rotate`.
"""

from __future__ import annotations

import enum

import numpy as np

from .model import SpinModel


class DistributionKind(enum.IntEnum):
    Q = -1
    W = 0
    P = 1

    @classmethod
    def parse(cls, value) -> "DistributionKind":
        if isinstance(value, str):
            names = {"q": cls.Q, "husimi": cls.Q, "w": cls.W, "wigner": cls.W, "p": cls.P,
                     "glauber": cls.P}
            try:
                return names[value.strip().lower()]
            except KeyError:
                raise ValueError(f"unknown distribution {value!r}") from None
        if isinstance(value, bool) or int(value) != value or int(value) not in (-1, 0, 1):
            raise ValueError(f"distribution kind must be -1, 0 or 1, got {value!r}")
        return cls(int(value))


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index``; independent of scheduling."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


def sample_down_state(k, spin: float, rng: np.random.Generator, size: int = 1):
    """Draw ``size`` samples of (alpha, beta) for the S^z = -S state."""
    k = DistributionKind.parse(k)
    root = np.sqrt(2 * spin)
    if k is DistributionKind.P:
        alpha = np.zeros(size, dtype=complex)
        beta = np.full(size, root, dtype=complex)
    elif k is DistributionKind.W:
        z = rng.standard_normal((size, 4)) * 0.5
        alpha = z[:, 0] + 1j * z[:, 1]
        beta = root + z[:, 2] + 1j * z[:, 3]
    else:
        z = rng.standard_normal((size, 2)) * np.sqrt(0.5)
        alpha = z[:, 0] + 1j * z[:, 1]
        radius = np.sqrt(rng.gamma(2 * spin + 1, 1.0, size))
        beta = radius * np.exp(2j * np.pi * rng.random(size))
    return alpha, beta


def rotate(alpha, beta, theta: float, phi: float):
    """Rotate amplitudes by ``theta`` about y and ``phi`` about z.

    The down state (0, sqrt(2S)) goes to a coherent state with
    <S> = S (-sin(theta) cos(phi), sin(theta) sin(phi), -cos(theta)).
    """
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.exp(1j * phi) * (c * alpha - s * beta), s * alpha + c * beta


def coherent_direction(theta: float, phi: float) -> np.ndarray:
    """Unit Bloch vector of the coherent state produced by :func:`rotate`."""
    return np.array([-np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), -np.cos(theta)])


def _site_angles(n_sites, theta, phi):
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (n_sites,))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n_sites,))
    return theta, phi


def sample_trajectory(model: SpinModel, k, theta, phi, rng: np.random.Generator) -> np.ndarray:
    """One initial PhasePoint drawn from ``rng``; ``theta``/``phi`` may be per site."""
    theta, phi = _site_angles(model.n_sites, theta, phi)
    alpha, beta = sample_down_state(k, model.spin, rng, size=model.n_sites)
    alpha, beta = rotate(alpha, beta, theta, phi)
    x = np.empty(2 * model.n_sites, dtype=complex)
    x[0::2] = alpha
    x[1::2] = beta
    return x


def sample_initial_ensemble(model, k, theta, phi, n_traj: int, master_seed: int) -> list:
    """``n_traj`` initial points, trajectory j drawn from its own stream."""
    return [
        sample_trajectory(model, k, theta, phi, trajectory_rng(master_seed, j))
        for j in range(n_traj)
    ]
