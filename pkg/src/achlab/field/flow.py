"""Volume-constrained gradient flow to critical points, and multistart hunts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from ..errors import Blowup, NonConvergence
from ..potential import Potential
from .energy import (b_inner, b_mean, dirichlet_density, dirichlet_operator, potential_terms,
                     project_volume, volume)
from .grid import ConformalMetric, Field, require_same_grid


_NOISE = 1e-14  # relative rounding allowance on energy comparisons


@dataclass(frozen=True)
class FlowOptions:
    tol: float = 1e-8
    max_iter: int = 200_000
    armijo: float = 1e-4
    step0: Optional[float] = None
    max_step_factor: float = 1e4  # BB steps are capped at this multiple of the stable explicit step
    precondition: bool = True  # Sobolev (FFT) preconditioned direction; False gives the plain L2 step


@dataclass
class CriticalPoint:
    u: Field
    epsilon: float
    lam: np.ndarray
    energy: float
    residual_norm: float
    volume: np.ndarray
    iterations: int = 0
    converged: bool = True
    nondegenerate: Optional[bool] = None
    sigma_min: Optional[float] = None


def _energy_and_gradient(values, eps, P, g, want_grad=True):
    order = 1 if want_grad else 0
    terms = potential_terms(P, values, order)
    E = float(np.sum(eps * dirichlet_density(values, g) + g.b * terms[0] / eps) * g.grid.cell_volume)
    if not want_grad:
        return E, None
    grad = 2.0 * eps * dirichlet_operator(values, g) / g.b + terms[1] / eps
    return E, grad


def _lipschitz_scale(eps, P, g, values) -> float:
    """Rough upper bound of the gradient's Lipschitz constant, for the first step."""
    lap = 2.0 * eps * float(np.max(g.a / g.b)) * sum(4.0 / h**2 for h in g.grid.spacing)
    H = potential_terms(P, values, 2)[2]
    curv = float(np.max(np.abs(H))) * values.shape[0]
    return lap + max(curv, 1.0) / eps


class _Preconditioner:
    """Inverse of c/eps - 2 eps <a/b> Lap_h applied by FFT on the flat grid."""

    def __init__(self, eps: float, g: ConformalMetric):
        grid = g.grid
        axes = tuple(range(1, grid.n + 1))
        symbol = np.zeros([grid.shape[k] if k < grid.n - 1 else grid.shape[k] // 2 + 1 for k in range(grid.n)])
        for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
            freq = np.arange(n) if k < grid.n - 1 else np.arange(n // 2 + 1)
            lam = (4.0 / h**2) * np.sin(np.pi * freq / n) ** 2
            symbol = symbol + lam.reshape([-1 if j == k else 1 for j in range(grid.n)])
        ratio = float(np.mean(g.a / g.b))
        self.inverse = 1.0 / (1.0 / eps + 2.0 * eps * ratio * symbol)
        self.axes = axes
        self.shape = grid.shape

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(np.fft.rfftn(r, axes=self.axes) * self.inverse, s=self.shape, axes=self.axes)


def constrained_flow(u0: Field, eps: float, v, P: Potential, g: ConformalMetric,
                     opts: FlowOptions | None = None) -> CriticalPoint:
    """Projected gradient descent on the constraint manifold volume(u) = v.

    Each step moves along minus the tangential gradient (the gradient with
    its b-weighted mean removed per component), with a Barzilai-Borwein
    trial step and Armijo backtracking on the energy, followed by an exact
    affine re-projection onto the constraint.  Λ is the b-mean of the final
    gradient.
    """
    opts = opts or FlowOptions()
    require_same_grid(u0.grid, g.grid)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u = project_volume(u0, v, g).values
    shape = (u.shape[0],) + (1,) * g.grid.n
    E, G = _energy_and_gradient(u, eps, P, g)
    if not math.isfinite(E):
        raise Blowup("initial energy is not finite")
    lam = b_mean(G, g)
    r = G - lam.reshape(shape)
    res = math.sqrt(b_inner(r, r, g))
    precond = _Preconditioner(eps, g) if opts.precondition else None
    if precond is None:
        base = 1.0 / _lipschitz_scale(eps, P, g, u)
    else:
        base = 0.5
    step = opts.step0 if opts.step0 is not None else base
    max_step = opts.max_step_factor * base

    def direction(r):
        if precond is None:
            return r, res * res
        d = precond(r)
        slope = b_inner(r, d, g)
        return (d, slope) if slope > 0 else (r, res * res)

    d, slope = direction(r)
    it = 0
    while res > opts.tol and it < opts.max_iter:
        it += 1
        while True:
            trial = project_volume(Field(g.grid, u - step * d), v, g).values
            Et, Gt = _energy_and_gradient(trial, eps, P, g)
            if not math.isfinite(Et):
                if step < 1e-30:
                    raise Blowup("energy became non-finite")
                step *= 0.5
                continue
            if Et <= E - opts.armijo * step * slope:
                break
            # Near convergence the predicted decrease drops below the rounding
            # noise of E; accept a step that is flat to rounding and reduces
            # the residual instead of backtracking forever.
            if Et <= E + _NOISE * abs(E):
                rt_probe = Gt - b_mean(Gt, g).reshape(shape)
                if b_inner(rt_probe, rt_probe, g) < res * res:
                    break
            step *= 0.5
            if step < 1e-14 * base:
                break
        if Et > E + _NOISE * abs(E):
            # backtracking hit its floor: accept nothing and stop
            break
        s = trial - u
        lam_t = b_mean(Gt, g)
        rt = Gt - lam_t.reshape(shape)
        y = rt - r
        if precond is None:
            sy, ss = b_inner(s, y, g), b_inner(s, s, g)
        else:
            # BB step in the preconditioned geometry: with s = -step M^-1 r, s.Ms = -step s.r
            sy, ss = b_inner(s, y, g), b_inner(s, -step * r, g)
        u, E, G, r, lam = trial, Et, Gt, rt, lam_t
        res = math.sqrt(b_inner(r, r, g))
        step = min(ss / sy, max_step) if sy > 0 and ss > 0 else min(2.0 * step, max_step)
        d, slope = direction(r)
    cp = CriticalPoint(u=Field(g.grid, u), epsilon=eps, lam=lam, energy=E, residual_norm=res,
                       volume=volume(Field(g.grid, u), g), iterations=it, converged=res <= opts.tol)
    if not cp.converged:
        raise NonConvergence(f"residual {res:.3e} above tolerance {opts.tol:.1e} after {it} iterations",
                             partial=cp)
    return cp


# ---------------------------------------------------------------------------
# hunting for distinct critical points


@dataclass(frozen=True)
class HuntOptions:
    flow: FlowOptions = FlowOptions()
    dedup_tol: Optional[float] = None  # default 1e-3 * sqrt(total volume)
    align: Optional[bool] = None  # default: align by translations iff the metric is flat


@dataclass
class HuntReport:
    points: List[CriticalPoint]
    eta: int
    dropped: int
    seed_to_point: List[Optional[int]] = field(default_factory=list)


def aligned_distance(u: np.ndarray, w: np.ndarray, g: ConformalMetric, align: bool) -> float:
    """b-weighted L2 distance, minimized over cyclic grid shifts of ``w`` when ``align``.

    All shifts are scored at once through an FFT cross-correlation, so the
    minimum is exact over the full translation group of the grid.
    """
    cell = g.grid.cell_volume
    if not align:
        d = u - w
        return math.sqrt(max(b_inner(d, d, g), 0.0))
    axes = tuple(range(1, g.grid.n + 1))
    cross = np.fft.irfftn(np.conj(np.fft.rfftn(w, axes=axes)) * np.fft.rfftn(u, axes=axes),
                          s=g.grid.shape, axes=axes).sum(axis=0)
    sq = float(np.sum(u * u)) + float(np.sum(w * w)) - 2.0 * float(cross.max())
    return math.sqrt(max(sq, 0.0) * cell)


def hunt(P: Potential, g: ConformalMetric, eps: float, v, seeds: List[Field],
         opts: HuntOptions | None = None) -> HuntReport:
    """Flow every seed, then keep one representative per distinct critical point.

    Points are sorted by energy; ``eta`` counts the distinct ones.  Seeds
    whose flow fails to converge are dropped and counted in ``dropped``.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    opts = opts or HuntOptions()
    tol = opts.dedup_tol if opts.dedup_tol is not None else 1e-3 * math.sqrt(g.volume)
    align = g.flat if opts.align is None else opts.align
    found: List[CriticalPoint] = []
    owner: List[Optional[int]] = []
    dropped = 0
    for seed in seeds:
        try:
            cp = constrained_flow(seed, eps, v, P, g, opts.flow)
        except (NonConvergence, Blowup):
            dropped += 1
            owner.append(None)
            continue
        match = None
        for idx, other in enumerate(found):
            if aligned_distance(cp.u.values, other.u.values, g, align) <= tol:
                match = idx
                break
        if match is None:
            found.append(cp)
            owner.append(len(found) - 1)
        else:
            owner.append(match)
            if cp.energy < found[match].energy:
                found[match] = cp
    order = sorted(range(len(found)), key=lambda i: found[i].energy)
    remap = {old: new for new, old in enumerate(order)}
    points = [found[i] for i in order]
    owner = [remap[o] if o is not None else None for o in owner]
    return HuntReport(points=points, eta=len(points), dropped=dropped, seed_to_point=owner)


def attach_nondegeneracy(cp: CriticalPoint, nondegenerate: bool, sigma_min: float) -> CriticalPoint:
    return replace(cp, nondegenerate=nondegenerate, sigma_min=sigma_min)
