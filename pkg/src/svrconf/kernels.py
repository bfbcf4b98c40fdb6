"""Hot numeric loops, each in a numba and a numpy flavour.

The public wrappers at the bottom dispatch on :func:`svrconf._accel.use_numba`
at call time. Both flavours perform the same floating point operations in the
same order wherever that is cheap to guarantee, so switching backends changes
speed, not answers.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# SMO for epsilon-SVR
#
# Variables a[0:n] = alpha, a[n:2n] = alpha*, signs z = (+1..., -1...).
# Minimize 0.5 a'Qa + p'a  s.t. z'a = 0, 0 <= a <= C, with
# Q[t,u] = z_t z_u K[t%n, u%n] and p = (eps - y, eps + y).
# ---------------------------------------------------------------------------


@njit(cache=True)
def _smo_full_nb(K, y, eps, C, tol, max_iter):
    n = y.shape[0]
    l = 2 * n
    a = np.zeros(l)
    G = np.empty(l)
    z = np.empty(l)
    for k in range(n):
        z[k] = 1.0
        z[k + n] = -1.0
        G[k] = eps - y[k]
        G[k + n] = eps + y[k]
    it = 0
    converged = False
    while it < max_iter:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(l):
            v = -z[t] * G[t]
            if z[t] > 0:
                up = a[t] < C
                low = a[t] > 0.0
            else:
                up = a[t] > 0.0
                low = a[t] < C
            if up and v > gmax:
                gmax = v
                i = t
            if low and v < gmin:
                gmin = v
                j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        ii = i if i < n else i - n
        jj = j if j < n else j - n
        eta = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
        if eta <= 1e-12:
            eta = 1e-12
        step = (gmax - gmin) / eta
        # which bound (if any) stops the step; 0 none, 1 a_i, 2 a_j
        hit = 0
        lim_i = C - a[i] if z[i] > 0 else a[i]
        lim_j = a[j] if z[j] > 0 else C - a[j]
        if lim_i <= step:
            step = lim_i
            hit = 1
        if lim_j <= step:
            step = lim_j
            hit = 2
        a[i] += z[i] * step
        a[j] -= z[j] * step
        if hit == 1:
            a[i] = C if z[i] > 0 else 0.0
        elif hit == 2:
            a[j] = 0.0 if z[j] > 0 else C
        for u in range(n):
            d = step * (K[u, ii] - K[u, jj])
            G[u] += d
            G[u + n] -= d
        it += 1
    return a, G, it, converged


def _smo_rows_np(get_row, diag, y, eps, C, tol, max_iter):
    n = y.shape[0]
    z = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    G = np.concatenate([eps - y, eps + y])
    it = 0
    converged = False
    while it < max_iter:
        v = -z * G
        pos = z > 0
        up = np.where(pos, a < C, a > 0.0)
        low = np.where(pos, a > 0.0, a < C)
        if not up.any() or not low.any():
            converged = True
            break
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gmax = vu[i]
        gmin = vl[j]
        if gmax - gmin < tol:
            converged = True
            break
        ii = i if i < n else i - n
        jj = j if j < n else j - n
        Ki = get_row(ii)
        Kj = get_row(jj)
        eta = diag[ii] + diag[jj] - 2.0 * Ki[jj]
        if eta <= 1e-12:
            eta = 1e-12
        step = (gmax - gmin) / eta
        hit = 0
        lim_i = C - a[i] if z[i] > 0 else a[i]
        lim_j = a[j] if z[j] > 0 else C - a[j]
        if lim_i <= step:
            step = lim_i
            hit = 1
        if lim_j <= step:
            step = lim_j
            hit = 2
        a[i] += z[i] * step
        a[j] -= z[j] * step
        if hit == 1:
            a[i] = C if z[i] > 0 else 0.0
        elif hit == 2:
            a[j] = 0.0 if z[j] > 0 else C
        d = step * (Ki - Kj)
        G[:n] += d
        G[n:] -= d
        it += 1
    return a, G, it, converged


def smo_full(K, y, eps, C, tol, max_iter):
    """Run SMO on a precomputed Gram matrix. Returns (a, G, iterations, converged)."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _accel.use_numba():
        a, G, it, conv = _smo_full_nb(K, y, float(eps), float(C), float(tol), int(max_iter))
        return a, G, int(it), bool(conv)
    return _smo_rows_np(lambda r: K[r], np.diag(K).copy(), y, eps, C, tol, max_iter)


def smo_rows(get_row, diag, y, eps, C, tol, max_iter):
    """SMO with kernel rows fetched on demand (for Gram matrices that do not fit)."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    return _smo_rows_np(get_row, np.asarray(diag, dtype=np.float64), y, eps, C, tol, max_iter)


# ---------------------------------------------------------------------------
# Kernel-expansion objective over one-hot configurations
#
# D[i, b, v] is the Hamming contribution of block b when the configuration
# picks value v, against support configuration i. The objective of a row of
# value indices r is sum_i a[i] * exp(-gamma * sum_b D[i, b, r[b]]) + bias.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _objective_rows_nb(D, a, gamma, bias, rows):
    m, P, _ = D.shape
    N = rows.shape[0]
    out = np.empty(N)
    for r in range(N):
        s = 0.0
        for i in range(m):
            h = 0.0
            for b in range(P):
                h += D[i, b, rows[r, b]]
            s += a[i] * math.exp(-gamma * h)
        out[r] = s + bias
    return out


def _objective_rows_np(D, a, gamma, bias, rows, chunk=4096):
    m, P, _ = D.shape
    out = np.empty(rows.shape[0])
    for start in range(0, rows.shape[0], chunk):
        blk = rows[start : start + chunk]
        h = np.zeros((m, blk.shape[0]))
        for b in range(P):
            h += D[:, b, blk[:, b]]
        out[start : start + chunk] = (a[:, None] * np.exp(-gamma * h)).sum(axis=0) + bias
    return out


def objective_rows(D, a, gamma, bias, rows):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if _accel.use_numba():
        return _objective_rows_nb(D, a, float(gamma), float(bias), rows)
    return _objective_rows_np(D, a, float(gamma), float(bias), rows)


@njit(cache=True)
def _child_bounds_nb(Dcol, hfix, ext, a, gamma, bias, nvals):
    m = a.shape[0]
    out = np.empty(nvals)
    for v in range(nvals):
        s = 0.0
        for i in range(m):
            s += a[i] * math.exp(-gamma * (hfix[i] + Dcol[i, v] + ext[i]))
        out[v] = s + bias
    return out


def _child_bounds_np(Dcol, hfix, ext, a, gamma, bias, nvals):
    h = (hfix + ext)[:, None] + Dcol[:, :nvals]
    return (a[:, None] * np.exp(-gamma * h)).sum(axis=0) + bias


def child_bounds(Dcol, hfix, ext, a, gamma, bias, nvals):
    """Lower bounds for each child obtained by fixing one more block.

    ``ext`` holds, per term, the free-block Hamming extreme matching the sign of
    the term's weight (largest for positive, smallest for negative weights).
    With every block fixed ``ext`` is zero and the bound is the exact objective.
    """
    if _accel.use_numba():
        return _child_bounds_nb(Dcol, hfix, ext, a, float(gamma), float(bias), int(nvals))
    return _child_bounds_np(Dcol, hfix, ext, a, float(gamma), float(bias), int(nvals))


@njit(cache=True)
def _neighbors_nb(D, a, gamma, bias, cur, hcur, sizes):
    m, P, V = D.shape
    out = np.full((P, V), np.inf)
    for b in range(P):
        cb = cur[b]
        for v in range(sizes[b]):
            if v == cb:
                continue
            s = 0.0
            for i in range(m):
                s += a[i] * math.exp(-gamma * (hcur[i] - D[i, b, cb] + D[i, b, v]))
            out[b, v] = s + bias
    return out


def _neighbors_np(D, a, gamma, bias, cur, hcur, sizes):
    m, P, V = D.shape
    out = np.full((P, V), np.inf)
    for b in range(P):
        cb = cur[b]
        nb = sizes[b]
        h = (hcur - D[:, b, cb])[:, None] + D[:, b, :nb]
        vals = (a[:, None] * np.exp(-gamma * h)).sum(axis=0) + bias
        vals[cb] = np.inf
        out[b, :nb] = vals
    return out


def neighbor_objectives(D, a, gamma, bias, cur, hcur, sizes):
    """Objective of every one-parameter change of ``cur``; ``inf`` marks non-moves."""
    cur = np.ascontiguousarray(cur, dtype=np.int64)
    sizes = np.ascontiguousarray(sizes, dtype=np.int64)
    if _accel.use_numba():
        return _neighbors_nb(D, a, float(gamma), float(bias), cur, hcur, sizes)
    return _neighbors_np(D, a, float(gamma), float(bias), cur, hcur, sizes)


def hamming_of_rows(D, rows):
    """Per-term Hamming distance, shape (m, N), for rows of value indices."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows[None, :]
    h = np.zeros((D.shape[0], rows.shape[0]))
    for b in range(D.shape[1]):
        h += D[:, b, rows[:, b]]
    return h
