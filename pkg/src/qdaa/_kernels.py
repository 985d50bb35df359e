"""Compiled fixed-step RK4 integration with facet-crossing refinement.

The integrators take the field evaluator as their first argument.
:func:`field_generic` walks the packed term arrays and works for every
field; :func:`specialised_field` compiles a straight-line evaluator for
one term structure, which is several times faster per step and pays for
its compile time on long horizons.
"""
from functools import lru_cache

import numpy as np
from numba import njit

STAYS, EXITED, BLOWUP = 0, 1, 2


@njit(cache=True, nogil=True, error_model="numpy")
def field_generic(x, coef, comp, vidx, vcnt, out):
    for i in range(out.shape[0]):
        out[i] = 0.0
    for t in range(coef.shape[0]):
        p = coef[t]
        for k in range(vcnt[t]):
            p *= x[vidx[t, k]]
        out[comp[t]] += p


@lru_cache(maxsize=None)
def _compile_structure(n: int, structure: tuple):
    terms = {i: [] for i in range(n)}
    for t, (c, variables) in enumerate(structure):
        terms[c].append(f"coef[{t}]" + "".join(f" * x[{v}]" for v in variables))
    lines = ["def field(x, coef, comp, vidx, vcnt, out):"]
    lines += [f"    out[{i}] = " + (" + ".join(terms[i]) if terms[i] else "0.0") for i in range(n)]
    ns: dict = {}
    exec("\n".join(lines), ns)  # noqa: S102 - source built from integer indices only
    return njit(nogil=True, error_model="numpy")(ns["field"])


def specialised_field(n, coef, comp, vidx, vcnt):
    """Straight-line evaluator for this term structure; coefficients are still read from ``coef``."""
    structure = tuple((int(comp[t]), tuple(int(v) for v in vidx[t, :vcnt[t]])) for t in range(len(coef)))
    return _compile_structure(int(n), structure)


@njit(cache=True, nogil=True, error_model="numpy")
def _rk4(field, x, h, coef, comp, vidx, vcnt, k1, k2, k3, k4, tmp, out):
    n = x.shape[0]
    field(x, coef, comp, vidx, vcnt, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    field(tmp, coef, comp, vidx, vcnt, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    field(tmp, coef, comp, vidx, vcnt, k3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    field(tmp, coef, comp, vidx, vcnt, k4)
    for i in range(n):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, nogil=True)
def _outside(x, lo, hi):
    for i in range(x.shape[0]):
        if x[i] < lo[i] or x[i] > hi[i]:
            return True
    return False


@njit(cache=True, nogil=True)
def _finite(x):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]):
            return False
    return True


@njit(cache=True, nogil=True)
def integrate_batch(field, x0, lo, hi, coef, comp, vidx, vcnt, sign, dt, t_max, tol,
                    status, xout, axis, side, tout):
    m, n = x0.shape
    coef = coef * sign
    span = hi - lo
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    x = np.empty(n)
    xn = np.empty(n)
    xa = np.empty(n)
    xb = np.empty(n)
    xm = np.empty(n)
    n_full = int(np.floor(t_max / dt + 1e-9))
    rest = t_max - n_full * dt
    if rest < 1e-12 * dt:
        rest = 0.0
    n_steps = n_full + (1 if rest > 0.0 else 0)
    for p in range(m):
        for i in range(n):
            x[i] = x0[p, i]
        status[p] = STAYS
        axis[p] = -1
        side[p] = -1
        t = 0.0
        for s in range(n_steps):
            h = dt if s < n_full else rest
            _rk4(field, x, h, coef, comp, vidx, vcnt, k1, k2, k3, k4, tmp, xn)
            if not _finite(xn):
                status[p] = BLOWUP
                for i in range(n):
                    xout[p, i] = x[i]
                tout[p] = t
                break
            if _outside(xn, lo, hi):
                # bisection on the first time the step leaves the box
                a = 0.0
                b = h
                for i in range(n):
                    xa[i] = x[i]
                    xb[i] = xn[i]
                for _ in range(200):
                    disp = 0.0
                    for i in range(n):
                        d = abs(xb[i] - xa[i]) / span[i]
                        if d > disp:
                            disp = d
                    if disp <= tol:
                        break
                    mid = 0.5 * (a + b)
                    if mid <= a or mid >= b:
                        break
                    _rk4(field, x, mid, coef, comp, vidx, vcnt, k1, k2, k3, k4, tmp, xm)
                    if _outside(xm, lo, hi):
                        b = mid
                        for i in range(n):
                            xb[i] = xm[i]
                    else:
                        a = mid
                        for i in range(n):
                            xa[i] = xm[i]
                # earliest crossing along the refined chord; ties keep axis order, lower first
                best = 2.0
                bax = -1
                bside = -1
                for i in range(n):
                    if xb[i] < lo[i]:
                        f = (xa[i] - lo[i]) / (xa[i] - xb[i])
                        if f < best - 1e-12:
                            best = f
                            bax = i
                            bside = 0
                    if xb[i] > hi[i]:
                        f = (hi[i] - xa[i]) / (xb[i] - xa[i])
                        if f < best - 1e-12:
                            best = f
                            bax = i
                            bside = 1
                if best < 0.0:
                    best = 0.0
                for i in range(n):
                    v = xa[i] + best * (xb[i] - xa[i])
                    if v < lo[i]:
                        v = lo[i]
                    elif v > hi[i]:
                        v = hi[i]
                    xout[p, i] = v
                xout[p, bax] = lo[bax] if bside == 0 else hi[bax]
                status[p] = EXITED
                axis[p] = bax
                side[p] = bside
                tout[p] = t + a + best * (b - a)
                break
            for i in range(n):
                x[i] = xn[i]
            t += h
        if status[p] == STAYS:
            for i in range(n):
                xout[p, i] = x[i]
            tout[p] = t


@njit(cache=True, nogil=True)
def trajectory(field, x0, coef, comp, vidx, vcnt, sign, dt, n_steps):
    n = x0.shape[0]
    coef = coef * sign
    out = np.empty((n_steps + 1, n))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    x = x0.copy()
    out[0] = x
    for s in range(n_steps):
        _rk4(field, x, dt, coef, comp, vidx, vcnt, k1, k2, k3, k4, tmp, out[s + 1])
        x[:] = out[s + 1]
    return out
