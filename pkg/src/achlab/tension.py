"""Surface tensions as distances in the degenerate metric sqrt(W)|dz|.

A path between two wells is a polyline with uniform parameter spacing.  Its
action is the midpoint rule ``sum_k sqrt(W(mid_k)) |x_{k+1} - x_k|`` and is
minimized over interior nodes by projected Barzilai-Borwein descent with
Armijo backtracking, keeping every node in the closed nonnegative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Optional, Tuple

import numpy as np

from . import kernels
from .errors import InvalidEndpoint, NonConvergence, ShapeError
from .potential import Potential
from .rng import SplitMix64


@dataclass(frozen=True)
class OptimizeOptions:
    max_iter: int = 100_000
    tol: float = 1e-10
    window: int = 50
    restarts: int = 2  # bent initializations on top of the straight segment
    seed: int = 0
    polish: bool = True  # retry pairs that violate the triangle inequality


@dataclass
class TensionMatrix:
    N: int
    omega: np.ndarray
    paths: Dict[Tuple[int, int], np.ndarray]
    immiscible: bool
    margin: float
    iterations: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def path(self, i: int, j: int) -> np.ndarray:
        """Stored minimizing polyline from well ``i`` to well ``j`` (0-based)."""
        if i < j:
            return self.paths[(i, j)]
        return self.paths[(j, i)][::-1]

    @classmethod
    def from_matrix(cls, omega) -> "TensionMatrix":
        """Wrap a prescribed tension matrix (no stored paths)."""
        om = np.array(omega, dtype=float)
        ok, margin = check_immiscible(om)
        return cls(N=om.shape[0], omega=om, paths={}, immiscible=ok, margin=margin)

    @classmethod
    def unit(cls, N: int) -> "TensionMatrix":
        return cls.from_matrix(np.ones((N, N)) - np.eye(N))


def _check_endpoint(P: Potential, z) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape != (P.m,):
        raise ShapeError(f"endpoint must have {P.m} components")
    if np.any(z < 0):
        raise InvalidEndpoint(f"endpoint {z.tolist()} leaves the nonnegative orthant")
    return z


def straight_path(a, b, K: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, K)[:, None]
    path = (1.0 - t) * a[None, :] + t * b[None, :]
    path[0], path[-1] = a, b
    return path


def _bent_path(a, b, K: int, rng: SplitMix64) -> np.ndarray:
    path = straight_path(a, b, K)
    span = b - a
    L = float(np.linalg.norm(span))
    if L == 0.0:
        return path
    if a.size == 1:
        # In one dimension only the node spacing can vary.
        s = np.sort(rng.uniform(K - 2))
        path[1:-1, 0] = a[0] + s * span[0]
        return path
    direction = rng.normal(a.size)
    direction -= direction.dot(span) / L**2 * span
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return path
    amp = L * rng.uniform(low=0.1, high=0.5)
    t = np.linspace(0.0, 1.0, K)
    path += amp * np.sin(np.pi * t)[:, None] * (direction / norm)[None, :]
    path[1:-1] = np.maximum(path[1:-1], 0.0)
    path[0], path[-1] = a, b
    return path


def _descend(P: Potential, init: np.ndarray, opts: OptimizeOptions):
    return kernels.polyline_descent(init, P, opts.max_iter, opts.tol, opts.window)


def _canonical(a, b) -> bool:
    """True when (a, b) is already in lexicographic order."""
    return tuple(a.tolist()) <= tuple(b.tolist())


def geodesic_search(P: Potential, a, b, K: int = 256, opts: OptimizeOptions | None = None,
                    inits: Optional[list] = None):
    """Multistart minimization; returns (distance, path, iterations).

    The search always runs from the lexicographically smaller endpoint, so
    swapping ``a`` and ``b`` reproduces the same value bit for bit.
    """
    opts = opts or OptimizeOptions()
    a = _check_endpoint(P, a)
    b = _check_endpoint(P, b)
    if K < 16:
        raise ValueError("K must be at least 16")
    flip = not _canonical(a, b)
    if flip:
        a, b = b, a
    if np.array_equal(a, b):
        path = np.repeat(a[None, :], K, axis=0)
        return 0.0, path, 0
    rng = SplitMix64(opts.seed)
    starts = [straight_path(a, b, K)]
    if P.m > 1:
        # a straight segment is the only monotone path in one dimension
        starts += [_bent_path(a, b, K, rng) for _ in range(opts.restarts)]
    for extra in inits or []:
        extra = np.asarray(extra, dtype=float)
        if flip:
            extra = extra[::-1]
        if extra.shape[0] != K:
            s_old = np.linspace(0.0, 1.0, extra.shape[0])
            s_new = np.linspace(0.0, 1.0, K)
            extra = np.stack([np.interp(s_new, s_old, extra[:, c]) for c in range(P.m)], axis=1)
        extra = extra.copy()
        extra[0], extra[-1] = a, b
        starts.append(np.maximum(extra, 0.0))
    best = None
    total_iter = 0
    failures = []
    for init in starts:
        path, value, iters, ok = _descend(P, init, opts)
        total_iter += iters
        if not ok:
            failures.append((value, path))
            continue
        key = (value, tuple(path.reshape(-1).tolist()))
        if best is None or key < best[0]:
            best = (key, value, path)
    if best is None:
        value, path = min(failures, key=lambda item: item[0])
        raise NonConvergence("path descent did not settle within the iteration budget",
                             partial=(value, path[::-1] if flip else path))
    _, value, path = best
    path = path.copy()
    path[0], path[-1] = a, b
    if flip:
        path = path[::-1].copy()
    return float(value), path, total_iter


def geodesic_distance(P: Potential, a, b, K: int = 256, opts: OptimizeOptions | None = None):
    """Discrete d_W(a, b) and its optimal polyline from ``a`` to ``b``."""
    value, path, _ = geodesic_search(P, a, b, K, opts)
    return value, path


def check_immiscible(omega) -> Tuple[bool, float]:
    """Strict triangle inequality test; returns (status, worst margin).

    The margin is the minimum of omega[i,l] + omega[l,j] - omega[i,j] over
    all i, j and every l outside {i, j}.  With fewer than three wells there
    is no triple and the margin is +inf.
    """
    om = np.asarray(omega, dtype=float)
    if om.ndim != 2 or om.shape[0] != om.shape[1]:
        raise ShapeError("tension matrix must be square")
    if not np.array_equal(om, om.T):
        raise ShapeError("tension matrix must be symmetric")
    if np.any(np.diag(om) != 0):
        raise ShapeError("tension matrix must have zero diagonal")
    if np.any(om < 0):
        raise ShapeError("tension matrix must be nonnegative")
    N = om.shape[0]
    margin = np.inf
    for i in range(N):
        for j in range(N):
            for l in range(N):
                if l in (i, j):
                    continue
                margin = min(margin, om[i, l] + om[l, j] - om[i, j])
    return bool(margin > 0), float(margin)


def tension_matrix(P: Potential, K: int = 256, opts: OptimizeOptions | None = None) -> TensionMatrix:
    """All pairwise well distances with stored minimizing paths.

    After the multistart pass, any pair whose value exceeds a two-leg route
    through a third well is re-optimized from the concatenated two-leg path;
    the better of the two results is kept.
    """
    opts = opts or OptimizeOptions()
    N = P.N
    omega = np.zeros((N, N))
    paths: Dict[Tuple[int, int], np.ndarray] = {}
    iters: Dict[Tuple[int, int], int] = {}
    for i, j in combinations(range(N), 2):
        try:
            val, path, it = geodesic_search(P, P.minima[i], P.minima[j], K, opts)
        except NonConvergence as exc:
            exc.context = (i, j)
            raise
        omega[i, j] = omega[j, i] = val
        paths[(i, j)] = path
        iters[(i, j)] = it
    if opts.polish and N > 2:
        for _ in range(N):
            changed = False
            for i, j in combinations(range(N), 2):
                for l in range(N):
                    if l in (i, j) or omega[i, j] <= omega[i, l] + omega[l, j]:
                        continue
                    leg1 = paths[(i, l)] if i < l else paths[(l, i)][::-1]
                    leg2 = paths[(l, j)] if l < j else paths[(j, l)][::-1]
                    joined = np.concatenate([leg1, leg2[1:]], axis=0)
                    val, path, it = geodesic_search(P, P.minima[i], P.minima[j], K,
                                                    OptimizeOptions(**{**opts.__dict__, "restarts": 0}),
                                                    inits=[joined])
                    iters[(i, j)] += it
                    if val < omega[i, j]:
                        omega[i, j] = omega[j, i] = val
                        paths[(i, j)] = path
                        changed = True
            if not changed:
                break
    ok, margin = check_immiscible(omega)
    return TensionMatrix(N=N, omega=omega, paths=paths, immiscible=ok, margin=margin, iterations=iters)


def path_length(path: np.ndarray) -> float:
    """Euclidean length of a polyline."""
    return float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
