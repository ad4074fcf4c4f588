"""Exact Lindblad integration for one collective spin, or two at small S.

The master equation conserves each spin's length, so the dynamics live in
the (2S+1)-dimensional Dicke space |S, m>, m = -S..S, per site.  Operators
are kept sparse and the density matrix dense.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.special import gammaln

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
from .sampling import DistributionKind, rotate

MAX_SINGLE_DIM = 2001
MAX_PAIR_DIM = 10_000


class OracleDimensionError(ValueError):
    """The model is too large for exact integration."""


class SteadyStateError(RuntimeError):
    """No steady state could be obtained within the iteration budget."""


@dataclass(frozen=True)
class SpinOperators:
    sp: sp.csr_matrix
    sm: sp.csr_matrix
    sz: sp.csr_matrix

    @property
    def sx(self):
        return ((self.sp + self.sm) * 0.5).tocsr()

    @property
    def sy(self):
        return ((self.sp - self.sm) * (-0.5j)).tocsr()


@lru_cache(maxsize=16)
def spin_operators(spin: float) -> SpinOperators:
    """S^+, S^-, S^z in the basis ordered m = -S, ..., S."""
    m = np.arange(-spin, spin + 0.5, 1.0)
    d = len(m)
    up = np.sqrt(spin * (spin + 1) - m[:-1] * (m[:-1] + 1))
    splus = sp.csr_matrix((up, (np.arange(1, d), np.arange(d - 1))), shape=(d, d), dtype=complex)
    return SpinOperators(splus, splus.conj().T.tocsr(), sp.diags(m.astype(complex)).tocsr())


@dataclass
class DensityMatrix:
    data: np.ndarray
    spin: float
    n_sites: int = 1

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def check(self, tol: float = 1e-10, pos_tol: float = 1e-8, positivity: bool = True):
        """Raise AssertionError unless Hermitian, unit-trace and positive."""
        r = self.data
        herm = np.max(np.abs(r - r.conj().T))
        tr = abs(np.trace(r) - 1)
        if herm > tol or tr > tol:
            raise AssertionError(f"density matrix invariants violated: herm={herm:.2e}, trace={tr:.2e}")
        if positivity:
            low = np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]
            if low < -pos_tol:
                raise AssertionError(f"negative eigenvalue {low:.2e}")
        return self


def _site_ops(model: SpinModel):
    ops = spin_operators(model.spin)
    if model.n_sites == 1:
        return [ops]
    eye = sp.identity(ops.sz.shape[0], dtype=complex, format="csr")
    out = []
    for site in range(model.n_sites):
        def emb(o, site=site):
            return sp.kron(o, eye, format="csr") if site == 0 else sp.kron(eye, o, format="csr")
        out.append(SpinOperators(emb(ops.sp), emb(ops.sm), emb(ops.sz)))
    return out


def check_dimension(model: SpinModel) -> int:
    d = int(round(2 * model.spin)) + 1
    if model.n_sites == 1:
        if d > MAX_SINGLE_DIM:
            raise OracleDimensionError(f"single-site dimension {d} exceeds {MAX_SINGLE_DIM}")
        return d
    if model.n_sites == 2:
        if d * d > MAX_PAIR_DIM:
            raise OracleDimensionError(f"two-site dimension {d * d} exceeds {MAX_PAIR_DIM}")
        return d * d
    raise OracleDimensionError(f"exact integration supports 1 or 2 sites, got {model.n_sites}")


class Liouvillian:
    """-i[H, rho] + sum_n G_n D[c_n] rho with the model's effective couplings."""

    def __init__(self, model: SpinModel):
        if not model.validated:
            model = validate(model)
        self.model = model
        self.dim = check_dimension(model)
        ops = _site_ops(model)
        h = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        jumps = []
        for term in model.terms:
            if isinstance(term, HeisenbergBond):
                a, b = ops[term.site_i], ops[term.site_j]
                jx, jy, jz = (effective_coupling(model, term, v) for v in (term.jx, term.jy, term.jz))
                h = h + jx * (a.sx @ b.sx) + jy * (a.sy @ b.sy) + jz * (a.sz @ b.sz)
                continue
            o = ops[term.site]
            coupling = effective_coupling(model, term)
            if isinstance(term, TransverseDrive):
                h = h + coupling * o.sx
            elif isinstance(term, LongitudinalField):
                h = h + coupling * o.sz
            elif isinstance(term, OneAxisTwist):
                h = h + coupling * (o.sx @ o.sx)
            elif isinstance(term, Decay):
                jumps.append((coupling, o.sm))
            elif isinstance(term, Gain):
                jumps.append((coupling, o.sp))
            elif isinstance(term, Dephasing):
                jumps.append((coupling, o.sz))
        self.hamiltonian = h.tocsr()
        self.jumps = [(g, c.tocsr()) for g, c in jumps if g != 0]
        heff = self.hamiltonian.copy()
        for g, c in self.jumps:
            heff = heff - 1j * g * (c.conj().T @ c)
        self.heff = heff.tocsr()
        self._ops = ops

    @property
    def site_operators(self):
        return self._ops

    def apply(self, rho: np.ndarray) -> np.ndarray:
        x = -1j * (self.heff @ rho)
        for g, c in self.jumps:
            x += g * (c @ (c @ rho).conj().T)
        return x + x.conj().T

    def superoperator(self) -> sp.csc_matrix:
        """Sparse generator acting on column-stacked rho."""
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        big = -1j * sp.kron(eye, self.heff) + 1j * sp.kron(self.heff.conj(), eye)
        for g, c in self.jumps:
            big = big + 2 * g * sp.kron(c.conj(), c)
        return big.tocsc()


def liouvillian_rhs(model: SpinModel, rho: np.ndarray) -> np.ndarray:
    return Liouvillian(model).apply(np.asarray(rho, dtype=complex))


def coherent_ket(spin: float, theta: float, phi: float) -> np.ndarray:
    """Spin-coherent state matching :func:`spintwa.sampling.rotate` of the down state."""
    two_s = int(round(2 * spin))
    ua, ub = rotate(0.0, 1.0, theta, phi)
    n = np.arange(two_s + 1)  # number of a quanta, m = n - S
    logmag = 0.5 * (gammaln(two_s + 1) - gammaln(n + 1) - gammaln(two_s - n + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        la, lb = np.log(abs(ua)) if ua != 0 else -np.inf, np.log(abs(ub)) if ub != 0 else -np.inf
        logs = logmag + np.where(n > 0, n * la, 0.0) + np.where(two_s - n > 0, (two_s - n) * lb, 0.0)
    phase = np.exp(1j * (n * np.angle(ua) + (two_s - n) * np.angle(ub)))
    ket = np.exp(logs) * phase
    return ket / np.linalg.norm(ket)


def initial_state(model: SpinModel, theta=0.0, phi=0.0) -> DensityMatrix:
    """Product of spin-coherent states, one per site."""
    check_dimension(model)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (model.n_sites,))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (model.n_sites,))
    ket = np.ones(1, dtype=complex)
    for i in range(model.n_sites):
        ket = np.kron(ket, coherent_ket(model.spin, theta[i], phi[i]))
    return DensityMatrix(np.outer(ket, ket.conj()), model.spin, model.n_sites)


STIFF_RATE = 1000.0
CHUNK_BYTES = 2e8


def _stiffness(liou: Liouvillian) -> float:
    """Largest diagonal decay rate of the generator (dephasing makes this ~ rate (2S)^2)."""
    rate = 0.0
    for g, c in liou.jumps:
        cc = (c.conj().T @ c).diagonal()
        cd = c.diagonal()
        rate = max(rate, 2 * g * float(np.max(np.abs(cc)) + np.max(np.abs(cd)) ** 2))
    return rate


def choose_method(liou: Liouvillian) -> str:
    """Explicit Dormand-Prince unless the generator is stiff, then implicit BDF."""
    return "BDF" if _stiffness(liou) > STIFF_RATE else "RK45"


def _integrate(liou: Liouvillian, rho0: np.ndarray, t_grid, callback, rtol, atol, method="auto"):
    d = liou.dim
    t_grid = np.asarray(t_grid, dtype=float)
    rho = np.array(rho0, dtype=complex)
    if method == "auto":
        method = choose_method(liou)
    if method == "BDF":
        big = liou.superoperator()

        def rhs(_, y):
            return big @ y

        kw = {"jac": big}
        order = "F"  # superoperator acts on column-stacked rho
    elif method in ("RK45", "DOP853"):

        def rhs(_, y):
            return liou.apply(y.reshape(d, d)).ravel()

        kw = {}
        order = "C"
    else:
        raise ValueError(f"unknown integration method {method!r}")

    # integrate across several save times per call; the chunk bounds stored output
    per_chunk = max(1, int(CHUNK_BYTES // (16 * d * d)))
    callback(0, rho)
    i = 1
    while i < len(t_grid):
        stop = min(len(t_grid), i + per_chunk)
        t_prev, targets = t_grid[i - 1], t_grid[i:stop]
        if targets[-1] > t_prev:
            sol = solve_ivp(rhs, (t_prev, targets[-1]), rho.ravel(order=order), method=method,
                            t_eval=targets, rtol=rtol, atol=atol, **kw)
            if not sol.success:
                raise RuntimeError(f"integration failed: {sol.message}")
            states = sol.y
        else:
            states = np.repeat(rho.ravel(order=order)[:, None], len(targets), axis=1)
        for j in range(len(targets)):
            rho = states[:, j].reshape((d, d), order=order)
            rho = 0.5 * (rho + rho.conj().T)
            callback(i + j, rho)
        i = stop
    return rho


def evolve(model: SpinModel, rho0, t_grid, rtol: float = 1e-9, atol: float = 1e-11,
           check: bool = True, method: str = "auto") -> list:
    """Density matrices at ``t_grid`` from adaptive integration.

    ``method="auto"`` uses Dormand-Prince (RK45) and switches to implicit BDF
    with the exact sparse Jacobian when dephasing makes the generator stiff.
    """
    liou = Liouvillian(model)
    data0 = rho0.data if isinstance(rho0, DensityMatrix) else rho0
    out = []

    def keep(_, rho):
        dm = DensityMatrix(rho.copy(), liou.model.spin, liou.model.n_sites)
        if check:
            dm.check()
        out.append(dm)

    _integrate(liou, data0, t_grid, keep, rtol, atol, method)
    return out


def spin_moments(rho: np.ndarray, liou_or_model) -> tuple:
    """Per-site <S_mu> (N, 3) and symmetrized <S_mu S_nu> (N, 3, 3)."""
    liou = liou_or_model if isinstance(liou_or_model, Liouvillian) else Liouvillian(liou_or_model)
    rho = rho.data if isinstance(rho, DensityMatrix) else rho
    first, second = [], []
    for o in liou.site_operators:
        comps = [o.sx, o.sy, o.sz]
        ev = lambda op: np.real(np.sum(op.T.multiply(rho)))  # Tr(op rho)
        first.append([ev(c) for c in comps])
        tab = np.empty((3, 3))
        for a in range(3):
            for b in range(a, 3):
                prod = comps[a] @ comps[b]
                tab[a, b] = tab[b, a] = ev(0.5 * (prod + prod.conj().T))
        second.append(tab)
    return np.array(first), np.array(second)


def pair_correlation(rho: np.ndarray, liou: Liouvillian, i: int, j: int) -> complex:
    """<S^+_i S^-_j>."""
    rho = rho.data if isinstance(rho, DensityMatrix) else rho
    op = liou.site_operators[i].sp @ liou.site_operators[j].sm
    return complex(np.sum(op.T.multiply(rho)))


def expectation_series(model: SpinModel, rho0, t_grid, rtol: float = 1e-9, atol: float = 1e-11,
                       check: bool = True, positivity_every: int = 1, method: str = "auto"):
    """Spin moments along the exact evolution without storing the states.

    Returns ``(first (T, N, 3), second (T, N, 3, 3))``.  Invariants are
    checked at every save time; the eigenvalue check runs every
    ``positivity_every`` save times.
    """
    liou = Liouvillian(model)
    data0 = rho0.data if isinstance(rho0, DensityMatrix) else rho0
    n_t = len(t_grid)
    first = np.empty((n_t, liou.model.n_sites, 3))
    second = np.empty((n_t, liou.model.n_sites, 3, 3))

    def observe(i, rho):
        if check:
            DensityMatrix(rho, liou.model.spin, liou.model.n_sites).check(
                positivity=(i % positivity_every == 0) or i == n_t - 1)
        first[i], second[i] = spin_moments(rho, liou)

    _integrate(liou, data0, t_grid, observe, rtol, atol, method)
    return first, second


def _steady_nullspace(liou: Liouvillian) -> np.ndarray:
    d = liou.dim
    big = liou.superoperator().tolil()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[np.arange(d) * (d + 1)] = 1.0
    big[0, :] = trace_row
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    vec = spla.spsolve(big.tocsc(), rhs)
    rho = vec.reshape(d, d, order="F")
    return 0.5 * (rho + rho.conj().T)


def _steady_evolve(liou: Liouvillian, rho0, tol, t_chunk, max_chunks):
    rho = rho0
    for _ in range(max_chunks):
        rho = _integrate(liou, rho, [0.0, t_chunk], lambda *a: None, 1e-10, 1e-13)
        if np.linalg.norm(liou.apply(rho)) < 1e3 * tol:  # integrator floor
            return rho
    raise SteadyStateError(f"no convergence after t={t_chunk * max_chunks}")


def steady_state(model: SpinModel, method: str = "auto", tol: float = 1e-10,
                 t_chunk: float = 20.0, max_chunks: int = 50) -> DensityMatrix:
    """Stationary state from the Liouvillian null space or long-time evolution.

    ``auto`` tries the null space first and falls back to evolution if the
    solve fails or the residual exceeds ``tol`` times a safety factor.
    """
    liou = Liouvillian(model)
    if liou.model.n_sites != 1:
        raise OracleDimensionError("steady states are computed for single sites only")
    if method in ("auto", "nullspace"):
        try:
            rho = _steady_nullspace(liou)
            resid = np.linalg.norm(liou.apply(rho))
            if np.all(np.isfinite(rho)) and resid < 1e3 * tol:
                return DensityMatrix(rho, liou.model.spin, 1)
            if method == "nullspace":
                raise SteadyStateError(f"null-space residual {resid:.2e}")
        except (RuntimeError, ValueError) as exc:
            if method == "nullspace":
                raise SteadyStateError(str(exc)) from exc
    if method not in ("auto", "evolve", "nullspace"):
        raise ValueError(f"unknown method {method!r}")
    rho0 = initial_state(liou.model).data
    rho = _steady_evolve(liou, rho0, tol, t_chunk, max_chunks)
    return DensityMatrix(rho, liou.model.spin, 1)


# ---------------------------------------------------------------------------
# exact phase-space moments by operator reordering


def _ordered_products(p: int, q: int, k: int, create, destroy):
    """k-ordered operator for (a^dag)^p a^q, averaged over orderings for k=0."""
    eye = sp.identity(create.shape[0], dtype=complex, format="csr")
    if k == 1:
        seqs = [("c",) * p + ("d",) * q]
    elif k == -1:
        seqs = [("d",) * q + ("c",) * p]
    else:
        seqs = [tuple("c" if i in pos else "d" for i in range(p + q))
                for pos in itertools.combinations(range(p + q), p)]
    total = sp.csr_matrix(create.shape, dtype=complex)
    for seq in seqs:
        op = eye
        for s in seq:
            op = op @ (create if s == "c" else destroy)
        total = total + op
    return total / len(seqs)


def symbol_moments(rho, spin: float, k, max_order: int = 2) -> dict:
    """Exact <conj(alpha)^p alpha^q conj(beta)^r beta^s> under k-ordering.

    Keys are (p, q, r, s) with p + q + r + s <= 2 * max_order.  ``rho`` is a
    single-site Dicke-basis density matrix embedded into two truncated boson
    modes (a carries S + m quanta, b carries S - m).
    """
    if max_order > 2:
        raise ValueError("symbol moments above second spin order are not supported")
    k = int(DistributionKind.parse(k))
    rho = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    two_s = int(round(2 * spin))
    if rho.shape != (two_s + 1, two_s + 1):
        raise ValueError("rho does not match the spin length")
    order = 2 * max_order
    cut = two_s + order + 1
    destroy = sp.diags(np.sqrt(np.arange(1, cut)), 1, format="csr", dtype=complex)
    create = destroy.conj().T.tocsr()
    eye = sp.identity(cut, dtype=complex, format="csr")
    n_a = np.arange(two_s + 1)
    emb = sp.csr_matrix((np.ones(two_s + 1), (n_a * cut + (two_s - n_a), np.arange(two_s + 1))),
                        shape=(cut * cut, two_s + 1), dtype=complex)
    out = {}
    cache_a, cache_b = {}, {}
    for p, q, r, s in itertools.product(range(order + 1), repeat=4):
        if p + q + r + s > order:
            continue
        if (p, q) not in cache_a:
            cache_a[p, q] = _ordered_products(p, q, k, create, destroy)
        if (r, s) not in cache_b:
            cache_b[r, s] = _ordered_products(r, s, k, create, destroy)
        op = sp.kron(cache_a[p, q], eye) @ sp.kron(eye, cache_b[r, s])
        small = (emb.conj().T @ op @ emb).toarray()
        out[p, q, r, s] = complex(np.sum(small.T * rho))
    return out
