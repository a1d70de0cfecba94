"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

Every kernel exists twice: a ``*_jit`` loop compiled with numba and a
``*_np`` vectorized numpy version. The active implementation is selected
once at import time. Set ``ISLANDPLACE_NUMBA=0`` to force the numpy path
(also used automatically when numba is not importable). Both paths are
kept semantically identical; ``benchmarks/bench_kernels.py`` compares
their speed and agreement.
"""

import os

import numpy as np

_ENV_FLAG = os.environ.get("ISLANDPLACE_NUMBA", "1")
NUMBA_ENABLED = _ENV_FLAG not in ("0", "false", "off")

if NUMBA_ENABLED:
    try:
        from numba import njit, prange
    except ImportError:
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    njit = None
    prange = range

INF = np.inf


# ---------------------------------------------------------------------------
# HPWL
# ---------------------------------------------------------------------------

def _hpwl_per_net_loop(net_ptr, pin_inst, x, y, out):
    n_nets = net_ptr.shape[0] - 1
    for e in range(n_nets):
        lo = net_ptr[e]
        hi = net_ptr[e + 1]
        if hi - lo < 2:
            out[e] = 0.0
            continue
        xmin = x[pin_inst[lo]]
        xmax = xmin
        ymin = y[pin_inst[lo]]
        ymax = ymin
        for p in range(lo + 1, hi):
            i = pin_inst[p]
            xi = x[i]
            yi = y[i]
            if xi < xmin:
                xmin = xi
            elif xi > xmax:
                xmax = xi
            if yi < ymin:
                ymin = yi
            elif yi > ymax:
                ymax = yi
        out[e] = (xmax - xmin) + (ymax - ymin)
    return out


def _hpwl_per_net_np(net_ptr, pin_inst, x, y, out):
    if net_ptr.shape[0] <= 1:
        return out
    px = x[pin_inst]
    py = y[pin_inst]
    starts = net_ptr[:-1]
    # reduceat needs non-empty segments; placement nets always have >= 2 pins
    xmax = np.maximum.reduceat(px, starts)
    xmin = np.minimum.reduceat(px, starts)
    ymax = np.maximum.reduceat(py, starts)
    ymin = np.minimum.reduceat(py, starts)
    out[:] = (xmax - xmin) + (ymax - ymin)
    out[np.diff(net_ptr) < 2] = 0.0
    return out


# ---------------------------------------------------------------------------
# Static timing sweeps over the levelized DAG
# ---------------------------------------------------------------------------

def _sta_forward_loop(order, in_ptr, in_src, in_eid, t_logic, is_start,
                      t_net, arr_in, launch):
    for k in range(order.shape[0]):
        v = order[k]
        lo = in_ptr[v]
        hi = in_ptr[v + 1]
        best = 0.0
        for p in range(lo, hi):
            u = in_src[p]
            cand = launch[u] + t_logic[u] + t_net[in_eid[p]]
            if cand > best:
                best = cand
        arr_in[v] = best
        launch[v] = 0.0 if is_start[v] else best


def _sta_forward_np(order, in_ptr, in_src, in_eid, t_logic, is_start,
                    t_net, arr_in, launch):
    # Vectorizing across the whole order is unsafe (deps within a level are
    # cut, but launch[] updates must land before dependents); the numpy path
    # batches per vertex which is exact and allocation-free per step.
    for v in order:
        lo, hi = in_ptr[v], in_ptr[v + 1]
        if hi > lo:
            src = in_src[lo:hi]
            best = np.max(launch[src] + t_logic[src] + t_net[in_eid[lo:hi]])
        else:
            best = 0.0
        arr_in[v] = best
        launch[v] = 0.0 if is_start[v] else best


def _sta_backward_loop(order, out_ptr, out_dst, out_eid, t_logic, is_end,
                       t_net, dly_max, req):
    for k in range(order.shape[0]):
        v = order[k]
        if is_end[v]:
            req[v] = dly_max
            continue
        lo = out_ptr[v]
        hi = out_ptr[v + 1]
        best = INF
        for p in range(lo, hi):
            cand = req[out_dst[p]] - t_net[out_eid[p]]
            if cand < best:
                best = cand
        req[v] = best - t_logic[v] if best < INF else INF


def _sta_backward_np(order, out_ptr, out_dst, out_eid, t_logic, is_end,
                     t_net, dly_max, req):
    for v in order:
        if is_end[v]:
            req[v] = dly_max
            continue
        lo, hi = out_ptr[v], out_ptr[v + 1]
        if hi > lo:
            best = np.min(req[out_dst[lo:hi]] - t_net[out_eid[lo:hi]])
        else:
            best = INF
        req[v] = best - t_logic[v] if best < INF else INF


# ---------------------------------------------------------------------------
# Piecewise net-delay evaluation
# ---------------------------------------------------------------------------

def _eval_delay_loop(dx, dy, breaks, coeffs, b0, b1, deduct, penalty, out):
    n = dx.shape[0]
    n_breaks = breaks.shape[0]
    for i in prange(n):
        ax = dx[i]
        ay = dy[i]
        d = np.sqrt(ax * ax + ay * ay)
        k = 0
        while k < n_breaks and d >= breaks[k]:
            k += 1
        a = coeffs[k]
        val = (a[0] * ax ** b0 + a[1] * ax ** b1
               + a[2] * ay ** b0 + a[3] * ay ** b1
               - deduct[i] + penalty[i])
        out[i] = val if val > 0.0 else 0.0
    return out


def _eval_delay_np(dx, dy, breaks, coeffs, b0, b1, deduct, penalty, out):
    d = np.hypot(dx, dy)
    idx = np.searchsorted(breaks, d, side="right")
    a = coeffs[idx]
    val = (a[:, 0] * dx ** b0 + a[:, 1] * dx ** b1
           + a[:, 2] * dy ** b0 + a[:, 3] * dy ** b1
           - deduct + penalty)
    np.maximum(val, 0.0, out=out)
    return out


# ---------------------------------------------------------------------------
# Jacobi-preconditioned conjugate gradient on CSR
# ---------------------------------------------------------------------------

def _cg_loop(indptr, indices, data, b, x0, tol, maxiter):
    n = b.shape[0]
    x = x0.copy()
    r = np.empty(n)
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        r[i] = b[i] - acc
    m_inv = np.empty(n)
    for i in range(n):
        diag = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag = data[p]
        m_inv[i] = 1.0 / diag if diag != 0.0 else 1.0
    bnorm = np.sqrt(np.dot(b, b))
    if bnorm == 0.0:
        bnorm = 1.0
    z = m_inv * r
    d = z.copy()
    rz = np.dot(r, z)
    best_x = x.copy()
    best_res = np.sqrt(np.dot(r, r)) / bnorm
    it = 0
    while it < maxiter:
        if best_res <= tol:
            break
        ad = np.empty(n)
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * d[indices[p]]
            ad[i] = acc
        dad = np.dot(d, ad)
        if dad <= 0.0:
            break
        alpha = rz / dad
        x = x + alpha * d
        r = r - alpha * ad
        res = np.sqrt(np.dot(r, r)) / bnorm
        if res < best_res:
            best_res = res
            best_x = x.copy()
        z = m_inv * r
        rz_new = np.dot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
    return best_x, best_res, it


def _cg_np(indptr, indices, data, b, x0, tol, maxiter):
    from scipy.sparse import csr_matrix

    n = b.shape[0]
    a_mat = csr_matrix((data, indices, indptr), shape=(n, n))
    diag = a_mat.diagonal()
    m_inv = np.where(diag != 0.0, 1.0 / np.where(diag == 0.0, 1.0, diag), 1.0)
    x = x0.copy()
    r = b - a_mat @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        bnorm = 1.0
    z = m_inv * r
    d = z.copy()
    rz = float(r @ z)
    best_x = x.copy()
    best_res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while it < maxiter:
        if best_res <= tol:
            break
        ad = a_mat @ d
        dad = float(d @ ad)
        if dad <= 0.0:
            break
        alpha = rz / dad
        x = x + alpha * d
        r = r - alpha * ad
        res = float(np.linalg.norm(r)) / bnorm
        if res < best_res:
            best_res = res
            best_x = x.copy()
        z = m_inv * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
    return best_x, best_res, it


# ---------------------------------------------------------------------------
# Bound2bound pair extraction
# ---------------------------------------------------------------------------

def _b2b_pairs_loop(net_ptr, pin_inst, net_w, coord, eps, pi, pj, pw):
    n_nets = net_ptr.shape[0] - 1
    k = 0
    for e in range(n_nets):
        lo = net_ptr[e]
        hi = net_ptr[e + 1]
        npins = hi - lo
        if npins < 2:
            continue
        imin = pin_inst[lo]
        imax = imin
        cmin = coord[imin]
        cmax = cmin
        for p in range(lo + 1, hi):
            i = pin_inst[p]
            c = coord[i]
            if c < cmin:
                cmin = c
                imin = i
            if c > cmax:
                cmax = c
                imax = i
        scale = net_w[e] / (npins - 1)
        span = cmax - cmin
        pi[k] = imin
        pj[k] = imax
        pw[k] = scale / (span if span > eps else eps)
        k += 1
        for p in range(lo, hi):
            i = pin_inst[p]
            if i == imin or i == imax:
                continue
            dlo = coord[i] - cmin
            pi[k] = i
            pj[k] = imin
            pw[k] = scale / (dlo if dlo > eps else eps)
            k += 1
            dhi = cmax - coord[i]
            pi[k] = i
            pj[k] = imax
            pw[k] = scale / (dhi if dhi > eps else eps)
            k += 1
    return k


def _b2b_pairs_np(net_ptr, pin_inst, net_w, coord, eps, pi, pj, pw):
    # Per-net python loop; inner work is tiny so numpy gains little here,
    # but the layout matches the jit path exactly.
    n_nets = net_ptr.shape[0] - 1
    k = 0
    for e in range(n_nets):
        lo, hi = net_ptr[e], net_ptr[e + 1]
        npins = hi - lo
        if npins < 2:
            continue
        insts = pin_inst[lo:hi]
        c = coord[insts]
        amin = int(np.argmin(c))
        amax = int(np.argmax(c))
        imin, imax = int(insts[amin]), int(insts[amax])
        cmin, cmax = float(c[amin]), float(c[amax])
        scale = net_w[e] / (npins - 1)
        span = cmax - cmin
        pi[k] = imin
        pj[k] = imax
        pw[k] = scale / (span if span > eps else eps)
        k += 1
        for p in range(npins):
            i = int(insts[p])
            if i == imin or i == imax:
                continue
            dlo = float(c[p]) - cmin
            pi[k] = i
            pj[k] = imin
            pw[k] = scale / (dlo if dlo > eps else eps)
            k += 1
            dhi = cmax - float(c[p])
            pi[k] = i
            pj[k] = imax
            pw[k] = scale / (dhi if dhi > eps else eps)
            k += 1
    return k


# numpy argmin takes the first minimum; keep the jit scan consistent with it
# (strict < for min, strict > for max, both first-occurrence).

if NUMBA_ENABLED:
    hpwl_per_net = njit(cache=True)(_hpwl_per_net_loop)
    sta_forward = njit(cache=True)(_sta_forward_loop)
    sta_backward = njit(cache=True)(_sta_backward_loop)
    eval_delay = njit(cache=True, parallel=True)(_eval_delay_loop)
    cg_solve = njit(cache=True)(_cg_loop)
    b2b_pairs = njit(cache=True)(_b2b_pairs_loop)
else:
    hpwl_per_net = _hpwl_per_net_np
    sta_forward = _sta_forward_np
    sta_backward = _sta_backward_np
    eval_delay = _eval_delay_np
    cg_solve = _cg_np
    b2b_pairs = _b2b_pairs_np


def set_threads(n):
    """Bound the numba thread pool; no-op on the numpy path."""
    if NUMBA_ENABLED and n >= 1:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
