"""Vectorized numpy kernels used when numba is disabled or missing."""

from __future__ import annotations

import numpy as np

FORM_DOUBLE_WELL = 0
FORM_PRODUCT = 1
FORM_SPLICED = 2

_CHUNK = 1 << 22  # elements per broadcast block


def _wg(points, form, minima, splice_r, splice_tau):
    # Local import keeps this module free of a hard dependency cycle.
    from .. import potential as pot

    if form == FORM_DOUBLE_WELL:
        return pot._double_well(points, 1)
    if form == FORM_PRODUCT:
        return pot._product(points, minima, 1)
    shim = pot.Potential(m=minima.shape[1], N=minima.shape[0], minima=minima, form="spliced",
                         growth=pot.Growth(0, 0, 0, 0, 0), splice=pot.Splice(splice_r, splice_tau))
    return pot._spliced(points, shim, 1)


def polyline_action(x, form, minima, splice_r, splice_tau):
    x = np.asarray(x, dtype=np.float64)
    delta = np.diff(x, axis=0)
    seg = np.sqrt(np.einsum("kc,kc->k", delta, delta))
    w, gw = _wg(0.5 * (x[1:] + x[:-1]), form, minima, splice_r, splice_tau)
    sw = np.sqrt(np.maximum(w, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(sw[:, None] > 0, 0.25 * gw * (seg / sw)[:, None], 0.0)
        b = np.where(seg[:, None] > 0, sw[:, None] * delta / seg[:, None], 0.0)
    grad = np.zeros_like(x)
    grad[:-1] += a - b
    grad[1:] += a + b
    grad[0] = 0.0
    grad[-1] = 0.0
    # sequential sum keeps the value bitwise comparable with the compiled loop
    total = 0.0
    for term in (sw * seg).tolist():
        total += term
    return total, grad


def polyline_descent(x0, form, minima, splice_r, splice_tau, max_iter, tol, window):
    x = np.array(x0, dtype=np.float64)
    K = x.shape[0]
    fx, g = polyline_action(x, form, minima, splice_r, splice_tau)
    gmax = float(np.max(np.abs(g)))
    if gmax == 0.0:
        return x, fx, 0, True
    length = float(np.sum(np.linalg.norm(np.diff(x, axis=0), axis=1)))
    step = 0.1 * (length / K + 1e-12) / gmax
    f_ref = fx
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        while True:
            xt = x - step * g
            xt[1:-1] = np.maximum(xt[1:-1], 0.0)
            xt[0], xt[-1] = x[0], x[-1]
            dec = float(np.sum(g * (x - xt)))
            ft, gt = polyline_action(xt, form, minima, splice_r, splice_tau)
            if ft <= fx - 1e-4 * dec:
                break
            step *= 0.5
            if step < 1e-300:
                return x, fx, it, True
        s = (xt - x)[1:-1]
        y = (gt - g)[1:-1]
        sy, ss = float(np.sum(s * y)), float(np.sum(s * s))
        step = min(ss / sy if sy > 0.0 else 2.0 * step, 1e12)
        x, g, fx = xt, gt, ft
        if ss == 0.0:
            converged = True
            break
        if it % window == 0:
            if f_ref - fx <= tol * max(abs(f_ref), 1e-300):
                converged = True
                break
            f_ref = fx
    return x, fx, it, converged


def _wrap(delta, lengths):
    return delta - lengths * np.floor(delta / lengths + 0.5)


def face_distances(points, faces, axes, spacing, lengths):
    points = np.asarray(points, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.float64)
    axes = np.asarray(axes)
    spacing = np.asarray(spacing, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    n = points.shape[1]
    normal = axes[:, None] == np.arange(n)[None, :]  # (F, n)
    out = np.empty(points.shape[0])
    rows = max(1, _CHUNK // max(1, faces.shape[0] * n))
    for start in range(0, points.shape[0], rows):
        blk = points[start:start + rows]
        delta = _wrap(blk[:, None, :] - faces[None, :, :], lengths)
        tang = np.maximum(np.abs(delta) - 0.5 * spacing, 0.0)
        delta = np.where(normal[None], delta, tang)
        out[start:start + rows] = np.sqrt(np.min(np.einsum("pfk,pfk->pf", delta, delta), axis=1))
    return out


def max_pair_distance(points, lengths):
    points = np.asarray(points, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    P = points.shape[0]
    best = 0.0
    rows = max(1, _CHUNK // max(1, P * points.shape[1]))
    for start in range(0, P, rows):
        delta = _wrap(points[start:start + rows, None, :] - points[None, :, :], lengths)
        best = max(best, float(np.max(np.einsum("ijk,ijk->ij", delta, delta))))
    return float(np.sqrt(best))
