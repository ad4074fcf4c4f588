# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama stepper.

Same rule table and update order as ``_fallback.advance``; trajectories are
integrated one after another so the working set stays in cache.
"""

from libc.math cimport sqrt, isfinite
from libc.stdlib cimport malloc, free

cdef enum:
    DRIVE = 0
    FIELD = 1
    TWIST = 2
    BOND = 3
    DECAY = 4
    GAIN = 5
    DEPHASE = 6


cdef inline double clamp_arg(double arg, long long *clamps) noexcept nogil:
    if arg < 0:
        clamps[0] += 1
        return 0.0
    return arg


cdef inline void bond_side(double *xr, double *xi, double *dr, double *di,
                           int n, int m, double plus, double minus, double zz,
                           int literal) noexcept nogil:
    cdef double anr = xr[2 * n], ani = xi[2 * n]
    cdef double bnr = xr[2 * n + 1], bni = xi[2 * n + 1]
    cdef double amr = xr[2 * m], ami = xi[2 * m]
    cdef double bmr = xr[2 * m + 1], bmi = xi[2 * m + 1]
    # sig = conj(a_m) b_m
    cdef double sr = amr * bmr + ami * bmi
    cdef double si = amr * bmi - ami * bmr
    cdef double pol = (amr * amr + ami * ami) - (bmr * bmr + bmi * bmi)
    # inner_a = plus*conj(sig)*b_n + minus*sig*b_n + zz*pol*a_n
    cdef double cr = plus * sr + minus * sr
    cdef double ci = -plus * si + minus * si
    cdef double ir = cr * bnr - ci * bni + zz * pol * anr
    cdef double ii = cr * bni + ci * bnr + zz * pol * ani
    dr[2 * n] += ii
    di[2 * n] += -ir
    # inner_b = plus*sig*a_n + minus*conj(sig)*a_n - zz*pol*tail
    cr = plus * sr + minus * sr
    ci = plus * si - minus * si
    cdef double tr, ti
    if literal:
        tr = anr
        ti = ani
    else:
        tr = bnr
        ti = bni
    ir = cr * anr - ci * ani - zz * pol * tr
    ii = cr * ani + ci * anr - zz * pol * ti
    dr[2 * n + 1] += ii
    di[2 * n + 1] += -ir


def advance(double[:, ::1] x, double[:, :, :] noise, double dt,
            int[::1] kinds, int[::1] site_a, int[::1] site_b,
            double[:, ::1] params, int[::1] woff, double k, int literal,
            unsigned char[::1] alive, long long[::1] clamps, double bound):
    """Advance ``x`` in place by ``noise.shape[1]`` Euler-Maruyama steps.

    ``x`` is the float64 view (B, 4N) of the complex (B, 2N) state.
    """
    cdef Py_ssize_t n_traj = x.shape[0]
    cdef Py_ssize_t n_amp = x.shape[1] // 2
    cdef Py_ssize_t n_steps = noise.shape[1]
    cdef Py_ssize_t n_rules = kinds.shape[0]
    cdef double sq = sqrt(dt)
    cdef double bound2 = bound * bound
    cdef double *xr = <double *> malloc(n_amp * sizeof(double))
    cdef double *xi = <double *> malloc(n_amp * sizeof(double))
    cdef double *dr = <double *> malloc(n_amp * sizeof(double))
    cdef double *di = <double *> malloc(n_amp * sizeof(double))
    if xr == NULL or xi == NULL or dr == NULL or di == NULL:
        free(xr); free(xi); free(dr); free(di)
        raise MemoryError()

    cdef Py_ssize_t b, t, r, q
    cdef int code, i, j, off
    cdef double p0, h, ar, ai, br, bi, na, nb, fa, fb, amp_a, amp_b
    cdef double plus, minus, zz, d, s, cr, ci, rate, z0, z1, z2, z3
    cdef long long local
    cdef int ia, ib, bad

    with nogil:
        for b in range(n_traj):
            if not alive[b]:
                continue
            for q in range(n_amp):
                xr[q] = x[b, 2 * q]
                xi[q] = x[b, 2 * q + 1]
            local = 0
            bad = 0
            for t in range(n_steps):
                for q in range(n_amp):
                    dr[q] = 0.0
                    di[q] = 0.0
                for r in range(n_rules):
                    code = kinds[r]
                    i = site_a[r]
                    p0 = params[r, 0]
                    ar = xr[2 * i]; ai = xi[2 * i]
                    br = xr[2 * i + 1]; bi = xi[2 * i + 1]
                    if code == DRIVE:
                        h = 0.5 * p0 * dt
                        dr[2 * i] += h * bi
                        di[2 * i] += -h * br
                        dr[2 * i + 1] += h * ai
                        di[2 * i + 1] += -h * ar
                    elif code == FIELD:
                        h = 0.5 * p0 * dt
                        dr[2 * i] += h * ai
                        di[2 * i] += -h * ar
                        dr[2 * i + 1] += -h * bi
                        di[2 * i + 1] += h * br
                    elif code == TWIST:
                        h = 0.5 * p0 * dt
                        na = ar * ar + ai * ai
                        nb = br * br + bi * bi
                        # conj(a) b^2 + a |b|^2
                        cr = ar * (br * br - bi * bi) + ai * (2 * br * bi) + ar * nb
                        ci = ar * (2 * br * bi) - ai * (br * br - bi * bi) + ai * nb
                        dr[2 * i] += h * ci
                        di[2 * i] += -h * cr
                        # conj(b) a^2 + |a|^2 b
                        cr = br * (ar * ar - ai * ai) + bi * (2 * ar * ai) + na * br
                        ci = br * (2 * ar * ai) - bi * (ar * ar - ai * ai) + na * bi
                        dr[2 * i + 1] += h * ci
                        di[2 * i + 1] += -h * cr
                    elif code == BOND:
                        j = site_b[r]
                        plus = 0.25 * (p0 + params[r, 1]) * dt
                        minus = 0.25 * (p0 - params[r, 1]) * dt
                        zz = 0.25 * params[r, 2] * dt
                        bond_side(xr, xi, dr, di, i, j, plus, minus, zz, literal)
                        bond_side(xr, xi, dr, di, j, i, plus, minus, zz, literal)
                    elif code == DECAY or code == GAIN:
                        if code == GAIN:
                            ia = 2 * i + 1
                            ib = 2 * i
                        else:
                            ia = 2 * i
                            ib = 2 * i + 1
                        ar = xr[ia]; ai = xi[ia]
                        br = xr[ib]; bi = xi[ib]
                        off = woff[r]
                        rate = p0
                        fa = (br * br + bi * bi) + 0.5 * (1 + k)
                        fb = (ar * ar + ai * ai) - 0.5 * (1 - k)
                        amp_a = sqrt(clamp_arg(rate * 0.5 * (1 - k) * fa, &local)) * sq
                        amp_b = sqrt(clamp_arg(rate * 0.5 * (1 + k) * fb, &local)) * sq
                        z0 = noise[b, t, off]
                        z1 = noise[b, t, off + 1]
                        z2 = noise[b, t, off + 2]
                        z3 = noise[b, t, off + 3]
                        h = -rate * fa * dt
                        dr[ia] += h * ar + amp_a * z0
                        di[ia] += h * ai + amp_a * z1
                        h = rate * fb * dt
                        dr[ib] += h * br + amp_b * z2
                        di[ib] += h * bi + amp_b * z3
                    elif code == DEPHASE:
                        off = woff[r]
                        d = -0.25 * p0 * dt
                        s = sqrt(0.5 * p0) * sq * noise[b, t, off]
                        # a * (d + i s), b * (d - i s)
                        dr[2 * i] += ar * d - ai * s
                        di[2 * i] += ar * s + ai * d
                        dr[2 * i + 1] += br * d + bi * s
                        di[2 * i + 1] += -br * s + bi * d
                for q in range(n_amp):
                    xr[q] += dr[q]
                    xi[q] += di[q]
                    if not (isfinite(xr[q]) and isfinite(xi[q])) or xr[q] * xr[q] + xi[q] * xi[q] > bound2:
                        bad = 1
                if bad:
                    break
            clamps[b] += local
            if bad:
                alive[b] = 0
                for q in range(n_amp):
                    x[b, 2 * q] = 0.0
                    x[b, 2 * q + 1] = 0.0
            else:
                for q in range(n_amp):
                    x[b, 2 * q] = xr[q]
                    x[b, 2 * q + 1] = xi[q]
    free(xr); free(xi); free(dr); free(di)
