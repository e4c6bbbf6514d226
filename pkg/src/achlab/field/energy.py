"""Discrete energy, its exact gradient, the volume map and second variations.

The discrete energy is

    E(u) = sum_cells [ eps * a * |D u|^2 + b * W(u) / eps ] * prod_k h_k

with D the periodic forward difference.  Its gradient in the b-weighted
inner product <f, g>_b = sum f.g b prod h is obtained with the adjoint
difference D^T f = (f_{i-1} - f_i) / h, so summation by parts holds exactly.
"""

from __future__ import annotations

import numpy as np

from ..potential import Potential, evaluate
from .grid import ConformalMetric, Field, require_same_grid


def _forward(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - u) / h


def _adjoint(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, 1, axis=axis) - f) / h


def _points(values: np.ndarray) -> np.ndarray:
    return np.moveaxis(values, 0, -1)


def potential_terms(P: Potential, values: np.ndarray, order: int):
    """W, grad W and hess W of a (m, *shape) sample array, component axes first."""
    out = evaluate(P, _points(values), order=order)
    res = [out[0]]
    if order >= 1:
        res.append(np.moveaxis(out[1], -1, 0))
    if order >= 2:
        res.append(np.moveaxis(out[2], (-2, -1), (0, 1)))
    return res


def dirichlet_operator(values: np.ndarray, g: ConformalMetric) -> np.ndarray:
    """sum_k D_k^T (a D_k u), componentwise; the Dirichlet part of the gradient without b^-1."""
    grid = g.grid
    out = np.zeros_like(values)
    a = g.a
    for k, h in enumerate(grid.spacing):
        axis = k + 1
        out += _adjoint(a * _forward(values, axis, h), axis, h)
    return out


def dirichlet_density(values: np.ndarray, g: ConformalMetric) -> np.ndarray:
    """a * |D u|^2 per cell."""
    grid = g.grid
    acc = np.zeros(grid.shape)
    for k, h in enumerate(grid.spacing):
        d = _forward(values, k + 1, h)
        acc += np.sum(d * d, axis=0)
    return g.a * acc


def energy(u: Field, eps: float, P: Potential, g: ConformalMetric) -> float:
    require_same_grid(u.grid, g.grid)
    if eps <= 0:
        raise ValueError("eps must be positive")
    W = potential_terms(P, u.values, 0)[0]
    dens = eps * dirichlet_density(u.values, g) + g.b * W / eps
    return float(np.sum(dens) * u.grid.cell_volume)


def volume(u: Field, g: ConformalMetric) -> np.ndarray:
    """b-weighted integral of each component."""
    require_same_grid(u.grid, g.grid)
    axes = tuple(range(1, u.grid.n + 1))
    return np.sum(u.values * g.b, axis=axes) * u.grid.cell_volume


def b_mean(values: np.ndarray, g: ConformalMetric) -> np.ndarray:
    axes = tuple(range(1, g.grid.n + 1))
    return np.sum(values * g.b, axis=axes) / np.sum(g.b)


def b_inner(f: np.ndarray, w: np.ndarray, g: ConformalMetric) -> float:
    return float(np.sum(f * w * g.b) * g.grid.cell_volume)


def b_norm(f: np.ndarray, g: ConformalMetric) -> float:
    return float(np.sqrt(b_inner(f, f, g)))


def energy_gradient(u: Field, eps: float, P: Potential, g: ConformalMetric) -> Field:
    """Exact b-weighted gradient of :func:`energy`.

    Differentiating eps * a |D u|^2 produces the factor two in front of the
    Dirichlet term: grad = 2 eps b^-1 D^T(a D u) + grad W(u) / eps.
    """
    require_same_grid(u.grid, g.grid)
    gW = potential_terms(P, u.values, 1)[1]
    return Field(u.grid, 2.0 * eps * dirichlet_operator(u.values, g) / g.b + gW / eps)


def project_volume(u: Field, v, g: ConformalMetric) -> Field:
    """Shift each component by a constant so that volume(u) = v."""
    require_same_grid(u.grid, g.grid)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (u.m,):
        raise ValueError(f"volume target needs {u.m} components")
    total = g.volume
    if total <= 0:
        raise ValueError("metric volume must be positive")
    shape = (u.m,) + (1,) * u.grid.n
    out = u.values + ((v - volume(u, g)) / total).reshape(shape)
    # a second pass removes the rounding left by the first shift
    out = out + ((v - volume(Field(u.grid, out), g)) / total).reshape(shape)
    return Field(u.grid, out)


def _hessian_apply(H: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,b...->a...", H, w)


def linearized_apply(u: Field, w: Field, eps: float, P: Potential, g: ConformalMetric,
                     coefficient: float = 1.0) -> Field:
    """Linearized operator -eps Lap_g w + hess W(u) w / eps in the b-weighted sense.

    The Dirichlet part is ``coefficient * eps * b^-1 D^T(a D w)``.  The
    default coefficient 1 matches the linearized elliptic system whose
    constant-state spectrum gives the degenerate values eps^2 = -mu/alpha;
    :func:`second_variation_apply` uses coefficient 2, the exact Hessian of
    :func:`energy`.  Both are symmetric in the b-weighted inner product.
    """
    require_same_grid(u.grid, w.grid, g.grid)
    if w.m != u.m:
        raise ValueError("direction must have as many components as the field")
    H = potential_terms(P, u.values, 2)[2]
    lap = dirichlet_operator(w.values, g) / g.b
    return Field(u.grid, coefficient * eps * lap + _hessian_apply(H, w.values) / eps)


def second_variation_apply(u: Field, w: Field, eps: float, P: Potential, g: ConformalMetric) -> Field:
    """Exact Hessian of the discrete energy applied to ``w`` (b-weighted)."""
    return linearized_apply(u, w, eps, P, g, coefficient=2.0)
