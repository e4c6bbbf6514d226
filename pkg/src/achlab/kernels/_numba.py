"""Compiled loop kernels.  Signatures mirror :mod:`achlab.kernels._numpy`."""

from __future__ import annotations

import math

import numba
import numpy as np

FORM_DOUBLE_WELL = 0
FORM_PRODUCT = 1
FORM_SPLICED = 2


@numba.njit(cache=True)
def _product_wg(z, minima, g, f, d):
    N, m = minima.shape
    for k in range(N):
        acc = 0.0
        for c in range(m):
            d[k, c] = z[c] - minima[k, c]
            acc += d[k, c] * d[k, c]
        f[k] = acc
    value = 1.0
    for k in range(N):
        value *= f[k]
    for c in range(m):
        g[c] = 0.0
    for k in range(N):
        other = 1.0
        for l in range(N):
            if l != k:
                other *= f[l]
        for c in range(m):
            g[c] += 2.0 * other * d[k, c]
    return value


@numba.njit(cache=True)
def potential_wg(z, form, minima, splice_r, splice_tau, g, f, d):
    """Value of W at ``z``; the gradient is written into ``g``."""
    if form == FORM_DOUBLE_WELL:
        u = z[0]
        v = 1.0 - u
        g[0] = 2.0 * u * v * (v - u)
        return (u * v) * (u * v)
    w0 = _product_wg(z, minima, g, f, d)
    if form == FORM_PRODUCT:
        return w0
    m = z.shape[0]
    r2 = 0.0
    for c in range(m):
        r2 += z[c] * z[c]
    r = math.sqrt(r2)
    if r <= splice_r:
        return w0
    p = 2.0 + splice_tau
    tail = r**p
    t = min((r - splice_r) / splice_r, 1.0)
    s = t * t * (3.0 - 2.0 * t)
    ds = 6.0 * t * (1.0 - t) / splice_r if t < 1.0 else 0.0
    for c in range(m):
        g[c] = (1.0 - s) * g[c] + s * p * r**splice_tau * z[c] + ds * (tail - w0) * z[c] / r
    return (1.0 - s) * w0 + s * tail


@numba.njit(cache=True)
def _action(x, form, minima, splice_r, splice_tau, grad, want_grad, mid, gw, f, d):
    K, m = x.shape
    total = 0.0
    if want_grad:
        for k in range(K):
            for c in range(m):
                grad[k, c] = 0.0
    for k in range(K - 1):
        seg2 = 0.0
        for c in range(m):
            mid[c] = 0.5 * (x[k, c] + x[k + 1, c])
            dc = x[k + 1, c] - x[k, c]
            seg2 += dc * dc
        w = potential_wg(mid, form, minima, splice_r, splice_tau, gw, f, d)
        sw = math.sqrt(w) if w > 0.0 else 0.0
        seg = math.sqrt(seg2)
        total += sw * seg
        if want_grad:
            for c in range(m):
                dc = x[k + 1, c] - x[k, c]
                a = 0.25 * gw[c] * seg / sw if sw > 0.0 else 0.0
                b = sw * dc / seg if seg > 0.0 else 0.0
                grad[k, c] += a - b
                grad[k + 1, c] += a + b
    if want_grad:
        for c in range(m):
            grad[0, c] = 0.0
            grad[K - 1, c] = 0.0
    return total


@numba.njit(cache=True)
def _descent(x0, form, minima, splice_r, splice_tau, max_iter, tol, window):
    K, m = x0.shape
    N = minima.shape[0]
    mid = np.empty(m)
    gw = np.empty(m)
    f_scr = np.empty(N)
    d_scr = np.empty((N, m))
    x = x0.copy()
    g = np.empty((K, m))
    xt = np.empty((K, m))
    gt = np.empty((K, m))
    fx = _action(x, form, minima, splice_r, splice_tau, g, True, mid, gw, f_scr, d_scr)
    gmax = 0.0
    length = 0.0
    for k in range(K):
        for c in range(m):
            gmax = max(gmax, abs(g[k, c]))
    for k in range(K - 1):
        s2 = 0.0
        for c in range(m):
            s2 += (x[k + 1, c] - x[k, c]) ** 2
        length += math.sqrt(s2)
    if gmax == 0.0:
        return x, fx, 0, True
    step = 0.1 * (length / K + 1e-12) / gmax
    f_ref = fx
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        stalled = False
        while True:
            dec = 0.0
            for k in range(K):
                for c in range(m):
                    v = x[k, c]
                    if 0 < k < K - 1:
                        v = x[k, c] - step * g[k, c]
                        if v < 0.0:
                            v = 0.0
                    xt[k, c] = v
                    dec += g[k, c] * (x[k, c] - v)
            ft = _action(xt, form, minima, splice_r, splice_tau, gt, True, mid, gw, f_scr, d_scr)
            if ft <= fx - 1e-4 * dec:
                break
            step *= 0.5
            if step < 1e-300:
                stalled = True
                break
        if stalled:
            converged = True
            break
        sy = 0.0
        ss = 0.0
        for k in range(1, K - 1):
            for c in range(m):
                s = xt[k, c] - x[k, c]
                y = gt[k, c] - g[k, c]
                sy += s * y
                ss += s * s
        step = ss / sy if sy > 0.0 else 2.0 * step
        if step > 1e12:
            step = 1e12
        for k in range(K):
            for c in range(m):
                x[k, c] = xt[k, c]
                g[k, c] = gt[k, c]
        fx = ft
        if ss == 0.0:
            converged = True
            break
        if it % window == 0:
            if f_ref - fx <= tol * max(abs(f_ref), 1e-300):
                converged = True
                break
            f_ref = fx
    return x, fx, it, converged


def polyline_descent(x0, form, minima, splice_r, splice_tau, max_iter, tol, window):
    return _descent(np.ascontiguousarray(x0, dtype=np.float64), form,
                    np.ascontiguousarray(minima, dtype=np.float64), float(splice_r), float(splice_tau),
                    int(max_iter), float(tol), int(window))


def polyline_action(x, form, minima, splice_r, splice_tau):
    x = np.ascontiguousarray(x, dtype=np.float64)
    K, m = x.shape
    N = minima.shape[0]
    grad = np.empty((K, m))
    val = _action(x, form, np.ascontiguousarray(minima, dtype=np.float64), float(splice_r), float(splice_tau),
                  grad, True, np.empty(m), np.empty(m), np.empty(N), np.empty((N, m)))
    return val, grad


@numba.njit(cache=True)
def _face_distances(points, faces, axes, spacing, lengths):
    P, n = points.shape
    F = faces.shape[0]
    out = np.empty(P)
    for p in range(P):
        best = np.inf
        for q in range(F):
            acc = 0.0
            for k in range(n):
                delta = points[p, k] - faces[q, k]
                delta -= lengths[k] * np.floor(delta / lengths[k] + 0.5)
                if k != axes[q]:
                    delta = abs(delta) - 0.5 * spacing[k]
                    if delta < 0.0:
                        delta = 0.0
                acc += delta * delta
                if acc >= best:
                    break
            if acc < best:
                best = acc
        out[p] = math.sqrt(best)
    return out


def face_distances(points, faces, axes, spacing, lengths):
    return _face_distances(np.ascontiguousarray(points, dtype=np.float64),
                           np.ascontiguousarray(faces, dtype=np.float64),
                           np.ascontiguousarray(axes, dtype=np.int64),
                           np.ascontiguousarray(spacing, dtype=np.float64),
                           np.ascontiguousarray(lengths, dtype=np.float64))


@numba.njit(cache=True)
def _max_pair_distance(points, lengths):
    P, n = points.shape
    best = 0.0
    for i in range(P):
        for j in range(i + 1, P):
            acc = 0.0
            for k in range(n):
                delta = points[i, k] - points[j, k]
                delta -= lengths[k] * np.floor(delta / lengths[k] + 0.5)
                acc += delta * delta
            if acc > best:
                best = acc
    return math.sqrt(best)


def max_pair_distance(points, lengths):
    return _max_pair_distance(np.ascontiguousarray(points, dtype=np.float64),
                              np.ascontiguousarray(lengths, dtype=np.float64))
