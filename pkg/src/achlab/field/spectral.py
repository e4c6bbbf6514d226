"""Spectral diagnostics: nondegeneracy of critical points and degenerate eps for constants."""

from __future__ import annotations

import itertools
import math
import warnings
from typing import List, NamedTuple, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from ..errors import EigSolverStall
from ..potential import Potential, evaluate
from ..rng import SplitMix64
from .energy import linearized_apply, potential_terms
from .grid import ConformalMetric, Field


class Nondegeneracy(NamedTuple):
    nondegenerate: bool
    sigma_min: float


_COEFFICIENT = {"linearized": 1.0, "hessian": 2.0}


def _spectral_bound(u: np.ndarray, eps: float, P: Potential, g: ConformalMetric, coef: float) -> float:
    lap = coef * eps * float(np.max(g.a / g.b)) * sum(4.0 / h**2 for h in g.grid.spacing)
    H = potential_terms(P, u, 2)[2]
    return lap + float(np.max(np.abs(H))) * u.shape[0] / eps


def tangent_spectrum(cp, P: Potential, g: ConformalMetric, k: int = 64, nev: int = 6,
                     operator: str = "linearized", seed: int = 0, max_nev: int = 96):
    """Lowest eigenvalues of the operator restricted to zero-b-mean fields.

    Works on S = B^(1/2) L B^(-1/2), which is symmetric in the plain inner
    product.  The m constant directions are moved to the top of the
    spectrum, and ``nev`` grows until at least one nonnegative eigenvalue is
    found so that the smallest magnitude is bracketed.  Returns
    (eigenvalues, converged).
    """
    if operator not in _COEFFICIENT:
        raise ValueError(f"operator must be one of {sorted(_COEFFICIENT)}")
    coef = _COEFFICIENT[operator]
    u = cp.u
    eps = cp.epsilon
    m = u.m
    grid = g.grid
    n_cells = grid.size
    sb = np.sqrt(g.b).reshape(-1)
    Q = np.zeros((m * n_cells, m))
    for c in range(m):
        Q[c * n_cells:(c + 1) * n_cells, c] = sb / np.linalg.norm(sb)
    shift = _spectral_bound(u.values, eps, P, g, coef) + 1.0
    shape = (m,) + grid.shape
    sb_full = np.tile(sb, m)

    def matvec(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        qx = Q.T @ x
        px = x - Q @ qx
        w = Field(grid, (px / sb_full).reshape(shape))
        y = (linearized_apply(u, w, eps, P, g, coefficient=coef).values.reshape(-1)) * sb_full
        y = y - Q @ (Q.T @ y)
        return y + shift * (Q @ qx)

    dim = m * n_cells
    op = LinearOperator((dim, dim), matvec=matvec, dtype=float)
    v0 = SplitMix64(seed).uniform(dim, -1.0, 1.0)
    converged = True
    vals = np.array([])
    nev = min(nev, dim - 2)
    while True:
        ncv = min(dim - 1, max(k, 2 * nev + 1))
        try:
            vals = eigsh(op, k=nev, which="SA", ncv=ncv, v0=v0, tol=1e-12, maxiter=20 * dim,
                         return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            converged = False
            vals = np.asarray(exc.eigenvalues)
        vals = np.sort(vals)
        if not converged or vals.size == 0 or vals.max() >= 0 or nev >= min(max_nev, dim - 2):
            break
        nev = min(2 * nev, max_nev, dim - 2)
    return vals, converged


def nondegeneracy_check(cp, P: Potential, g: ConformalMetric, k: int = 64, operator: str = "linearized",
                        floor: float | None = None, nev: int = 6, seed: int = 0) -> Nondegeneracy:
    """Smallest-magnitude eigenvalue of the constrained operator and the verdict.

    ``operator="linearized"`` uses -eps Lap + hess W / eps (the linearized
    elliptic system); ``operator="hessian"`` uses the exact Hessian of the
    discrete energy, whose kernel contains translation modes of flat-torus
    critical points.  The default floor is 1e-6 / eps.
    """
    vals, converged = tangent_spectrum(cp, P, g, k=k, nev=nev, operator=operator, seed=seed)
    if vals.size == 0:
        warnings.warn("eigensolver returned no eigenvalues", EigSolverStall, stacklevel=2)
        return Nondegeneracy(False, math.nan)
    if not converged:
        warnings.warn("eigensolver stalled; sigma_min is a best estimate", EigSolverStall, stacklevel=2)
    sigma = float(np.min(np.abs(vals)))
    floor = 1e-6 / cp.epsilon if floor is None else floor
    return Nondegeneracy(sigma > floor, sigma)


def torus_laplacian_eigenvalues(lengths, modes: int) -> List[Tuple[float, Tuple[int, ...]]]:
    """alpha = 4 pi^2 sum_k (n_k / L_k)^2 for nonzero integer modes with |n_k| <= modes."""
    out = []
    for ns in itertools.product(range(-modes, modes + 1), repeat=len(lengths)):
        if not any(ns):
            continue
        alpha = 4.0 * math.pi**2 * sum((nk / L) ** 2 for nk, L in zip(ns, lengths))
        out.append((alpha, ns))
    return sorted(out)


def degeneracy_scan(P: Potential, v, g: ConformalMetric, eps_range=(0.0, math.inf), modes: int = 3) -> List[float]:
    """Values of eps at which the constant state v / vol has a degenerate linearization.

    The constant c = v / vol solves the constrained system for every eps;
    its linearization on the mode with Laplacian eigenvalue alpha and
    Hessian eigenvalue mu vanishes when eps^2 = -mu / alpha.  Only mu < 0
    contributes.  The result is sorted in decreasing order with duplicates
    (equal alpha) merged.
    """
    if not g.flat:
        raise ValueError("the closed-form scan needs a flat metric")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    c = v / g.volume
    H = evaluate(P, c)[2]
    mus = np.linalg.eigvalsh(np.atleast_2d(H))
    lo, hi = eps_range
    found = []
    for alpha in sorted({round(a, 9): a for a, _ in torus_laplacian_eigenvalues(g.grid.lengths, modes)}.values()):
        for mu in mus:
            if mu >= 0:
                continue
            eps = math.sqrt(-mu / alpha)
            if lo <= eps <= hi:
                found.append(eps)
    found.sort(reverse=True)
    merged: List[float] = []
    for e in found:
        if not merged or abs(merged[-1] - e) > 1e-12 * e:
            merged.append(e)
    return merged
