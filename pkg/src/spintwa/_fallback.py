"""Pure-numpy Euler-Maruyama stepper.

Mirrors ``_kernel.pyx`` rule by rule and is used when the compiled
extension is unavailable.  Arrays are vectorized over the trajectories of
one block; rules are applied one at a time in table order.
"""

from __future__ import annotations

import numpy as np

DRIVE, FIELD, TWIST, BOND, DECAY, GAIN, DEPHASE = range(7)


def _nsq(z):
    return z.real * z.real + z.imag * z.imag


def _clamped_sqrt(arg, clamps):
    neg = arg < 0
    if neg.any():
        clamps += neg
        arg = np.where(neg, 0.0, arg)
    return np.sqrt(arg)


def apply_rule(code, i, j, p, off, k, literal, x, z, dt, sq, dx, clamps):
    """Add one rule's drift * dt + noise increment to ``dx``.

    ``x`` and ``dx`` have shape (B, 2N); ``z`` holds unit normals (B, W) for
    this step and is scaled by ``sq`` (sqrt(dt)).  ``clamps`` (B,) counts
    negative square-root arguments.
    """
    a = x[:, 2 * i]
    b = x[:, 2 * i + 1]
    if code == DRIVE:
        h = 0.5 * p[0] * dt
        dx[:, 2 * i] += -1j * h * b
        dx[:, 2 * i + 1] += -1j * h * a
    elif code == FIELD:
        h = 0.5 * p[0] * dt
        dx[:, 2 * i] += -1j * h * a
        dx[:, 2 * i + 1] += 1j * h * b
    elif code == TWIST:
        h = 0.5 * p[0] * dt
        na, nb = _nsq(a), _nsq(b)
        dx[:, 2 * i] += -1j * h * (np.conj(a) * b * b + a * nb)
        dx[:, 2 * i + 1] += -1j * h * (np.conj(b) * a * a + na * b)
    elif code == BOND:
        plus = 0.25 * (p[0] + p[1]) * dt
        minus = 0.25 * (p[0] - p[1]) * dt
        zz = 0.25 * p[2] * dt
        for n, m in ((i, j), (j, i)):
            an, bn = x[:, 2 * n], x[:, 2 * n + 1]
            am, bm = x[:, 2 * m], x[:, 2 * m + 1]
            sig = np.conj(am) * bm
            pol = _nsq(am) - _nsq(bm)
            dx[:, 2 * n] += -1j * (plus * np.conj(sig) * bn + minus * sig * bn + zz * pol * an)
            tail = an if literal else bn
            dx[:, 2 * n + 1] += -1j * (plus * sig * an + minus * np.conj(sig) * an - zz * pol * tail)
    elif code == DECAY or code == GAIN:
        # gain is decay with the two modes exchanged
        if code == GAIN:
            a, b = b, a
            ia, ib = 2 * i + 1, 2 * i
        else:
            ia, ib = 2 * i, 2 * i + 1
        rate = p[0]
        fa = _nsq(b) + 0.5 * (1 + k)
        fb = _nsq(a) - 0.5 * (1 - k)
        amp_a = _clamped_sqrt(rate * 0.5 * (1 - k) * fa, clamps) * sq
        amp_b = _clamped_sqrt(rate * 0.5 * (1 + k) * fb, clamps) * sq
        dx[:, ia] += -rate * fa * dt * a + amp_a * (z[:, off] + 1j * z[:, off + 1])
        dx[:, ib] += rate * fb * dt * b + amp_b * (z[:, off + 2] + 1j * z[:, off + 3])
    elif code == DEPHASE:
        d = -0.25 * p[0] * dt
        s = np.sqrt(0.5 * p[0]) * sq * z[:, off]
        dx[:, 2 * i] += a * (d + 1j * s)
        dx[:, 2 * i + 1] += b * (d - 1j * s)
    else:
        raise ValueError(f"unknown rule code {code}")


def advance(x, noise, dt, kinds, site_a, site_b, params, woff, k, literal, alive, clamps, bound):
    """Advance ``x`` (B, 2N) in place by ``noise.shape[1]`` steps."""
    n_steps = noise.shape[1]
    sq = np.sqrt(dt)
    n_rules = len(kinds)
    live = alive.astype(bool)
    step_clamps = np.zeros(x.shape[0], dtype=np.int64)
    for t in range(n_steps):
        if not live.any():
            break
        dx = np.zeros_like(x)
        z = noise[:, t, :]
        step_clamps[:] = 0
        for r in range(n_rules):
            apply_rule(kinds[r], site_a[r], site_b[r], params[r], woff[r], k, literal,
                       x, z, dt, sq, dx, step_clamps)
        x += dx
        clamps += np.where(live, step_clamps, 0)
        bad = ~np.isfinite(x).all(axis=1) | (_nsq(x).max(axis=1) > bound * bound)
        bad &= live
        if bad.any():
            live &= ~bad
            x[bad] = 0.0
        x[~live] = 0.0
    alive[:] = live
