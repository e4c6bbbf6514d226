"""Discrete weighted clusters: measures, distances and labeling from fields."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.special import gamma

from .. import kernels
from ..errors import EmptyInterior, NegativeVolume, ShapeError
from ..field.grid import ConformalMetric, Field, TorusGrid, require_same_grid
from ..potential import Potential, evaluate, to_text
from ..tension import TensionMatrix


@dataclass(eq=False)
class Cluster:
    """Chamber labels in {1..N} per cell; chamber N is the exterior."""

    grid: TorusGrid
    labels: np.ndarray
    N: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.shape != self.grid.shape:
            raise ShapeError(f"labels of shape {lab.shape} do not fit grid {self.grid.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(lab == np.round(lab)):
                raise ShapeError("labels must be integers")
            lab = lab.astype(np.int64)
        if lab.min() < 1 or lab.max() > self.N:
            raise ShapeError(f"labels must lie in 1..{self.N}")
        self.labels = lab.astype(np.int64, copy=False)

    def chamber(self, i: int) -> np.ndarray:
        """Boolean mask of chamber ``i`` (1-based)."""
        return self.labels == i

    @property
    def interior(self) -> np.ndarray:
        return self.labels < self.N

    def __eq__(self, other):
        return (isinstance(other, Cluster) and self.N == other.N and self.grid == other.grid
                and np.array_equal(self.labels, other.labels))


def volumes(c: Cluster, g: ConformalMetric) -> np.ndarray:
    """b-weighted measure of every chamber, indexed 0..N-1 for labels 1..N."""
    require_same_grid(c.grid, g.grid)
    sums = np.bincount(c.labels.reshape(-1) - 1, weights=g.b.reshape(-1), minlength=c.N)
    return sums * c.grid.cell_volume


def _face_weights(g: ConformalMetric, k: int) -> np.ndarray:
    grid = g.grid
    rho_face = 0.5 * (g.rho + np.roll(g.rho, -1, axis=k))
    other = float(np.prod([h for j, h in enumerate(grid.spacing) if j != k])) if grid.n > 1 else 1.0
    return rho_face ** (grid.n - 1) * other


def interface_measure(c: Cluster, g: ConformalMetric) -> np.ndarray:
    """Face-counting interface areas H[i, j] between chambers (0-based indices)."""
    require_same_grid(c.grid, g.grid)
    N = c.N
    H = np.zeros(N * N)
    for k in range(c.grid.n):
        nb = np.roll(c.labels, -1, axis=k)
        mask = nb != c.labels
        if not np.any(mask):
            continue
        i = c.labels[mask] - 1
        j = nb[mask] - 1
        w = _face_weights(g, k)[mask]
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        H += np.bincount(lo * N + hi, weights=w, minlength=N * N)
    H = H.reshape(N, N)
    return H + H.T


def chamber_perimeters(c: Cluster, g: ConformalMetric) -> np.ndarray:
    """Face-counting perimeter of each chamber, counted from its own boundary faces."""
    require_same_grid(c.grid, g.grid)
    out = np.zeros(c.N)
    for k in range(c.grid.n):
        w = _face_weights(g, k)
        nb = np.roll(c.labels, -1, axis=k)
        for i in range(1, c.N + 1):
            here, there = c.labels == i, nb == i
            out[i - 1] += float(np.sum(w[here != there]))
    return out


def _omega(T) -> np.ndarray:
    return np.asarray(T.omega if isinstance(T, TensionMatrix) else T, dtype=float)


def multi_perimeter(c: Cluster, T, g: ConformalMetric, H: Optional[np.ndarray] = None) -> float:
    """Sum over ordered pairs i != j of omega[i, j] * H[i, j]."""
    om = _omega(T)
    if om.shape != (c.N, c.N):
        raise ShapeError(f"tension matrix is {om.shape}, cluster has N = {c.N}")
    H = interface_measure(c, g) if H is None else H
    return float(np.sum(om * H))


def _smoothed_gradient_norm(f: np.ndarray, g: ConformalMetric, sigma_cells: Tuple[float, ...]) -> np.ndarray:
    sm = ndimage.gaussian_filter(f, sigma=sigma_cells, mode="wrap")
    acc = np.zeros_like(sm)
    for k, h in enumerate(g.grid.spacing):
        d = (np.roll(sm, -1, axis=k) - np.roll(sm, 1, axis=k)) / (2.0 * h)
        acc += d * d
    return np.sqrt(acc)


def isotropic_interface_measure(c: Cluster, g: ConformalMetric, width: float = 2.0) -> np.ndarray:
    """Interface areas from gradients of Gaussian-smoothed indicators.

    Chamber indicators are smoothed with a periodic Gaussian whose standard
    deviation is ``width`` cells; the pair measure is
    (|grad x_i| + |grad x_j| - |grad (x_i + x_j)|) / 2 integrated with the
    weight rho^(n-1).
    """
    require_same_grid(c.grid, g.grid)
    sig = (width,) * c.grid.n
    weight = g.rho ** (c.grid.n - 1) * c.grid.cell_volume
    present = [i for i in range(1, c.N + 1) if np.any(c.labels == i)]
    single: Dict[int, np.ndarray] = {}
    for i in present:
        single[i] = _smoothed_gradient_norm((c.labels == i).astype(float), g, sig)
    H = np.zeros((c.N, c.N))
    for a in present:
        for b in present:
            if b <= a:
                continue
            joint = _smoothed_gradient_norm(((c.labels == a) | (c.labels == b)).astype(float), g, sig)
            val = 0.5 * float(np.sum((single[a] + single[b] - joint) * weight))
            H[a - 1, b - 1] = H[b - 1, a - 1] = max(val, 0.0)
    return H


def isotropic_multi_perimeter(c: Cluster, T, g: ConformalMetric, width: float = 2.0) -> float:
    return multi_perimeter(c, T, g, H=isotropic_interface_measure(c, g, width))


def isotropic_perimeter(mask: np.ndarray, g: ConformalMetric, width: float = 2.0) -> float:
    """Isotropic perimeter estimate of a single set."""
    sig = (width,) * g.grid.n
    weight = g.rho ** (g.grid.n - 1) * g.grid.cell_volume
    return float(np.sum(_smoothed_gradient_norm(mask.astype(float), g, sig) * weight))


def flat_distance(c1: Cluster, c2: Cluster, g: ConformalMetric) -> float:
    """Sum over interior chambers of the b-measure of the symmetric differences."""
    require_same_grid(c1.grid, c2.grid, g.grid)
    if c1.N != c2.N:
        raise ShapeError("clusters have different chamber counts")
    total = 0.0
    for i in range(1, c1.N):
        diff = (c1.labels == i) != (c2.labels == i)
        total += float(np.sum(g.b[diff]))
    return total * c1.grid.cell_volume


def _interior_points(c: Cluster, mask: Optional[np.ndarray] = None) -> np.ndarray:
    mask = c.interior if mask is None else mask
    idx = np.nonzero(mask)
    return np.stack([(idx[k] + 0.5) * c.grid.spacing[k] for k in range(c.grid.n)], axis=1)


def _fits_half_box(points: np.ndarray, lengths) -> bool:
    """True when the points fit, after unwrapping, in a box narrower than L/2 on each axis."""
    for k, L in enumerate(lengths):
        x = np.sort(np.mod(points[:, k], L))
        gaps = np.diff(np.concatenate([x, [x[0] + L]]))
        if L - gaps.max() >= 0.5 * L:
            return False
    return True


def interior_diameter_report(c: Cluster, exact_limit: int = 10_000) -> Tuple[float, bool]:
    """(diameter, exact) of the interior under the periodic distance between cell centers.

    Above ``exact_limit`` interior cells only boundary cells are compared;
    that is exact when the interior fits in a box of half the torus, and is
    flagged otherwise.
    """
    mask = c.interior
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise EmptyInterior("cluster interior is empty")
    if count <= exact_limit:
        return kernels.max_pair_distance(_interior_points(c), c.grid.lengths), True
    edge = np.zeros_like(mask)
    for k in range(c.grid.n):
        edge |= mask & (~np.roll(mask, 1, axis=k) | ~np.roll(mask, -1, axis=k))
    pts = _interior_points(c, edge)
    exact = _fits_half_box(_interior_points(c), c.grid.lengths)
    return kernels.max_pair_distance(pts, c.grid.lengths), exact


def interior_diameter(c: Cluster) -> float:
    return interior_diameter_report(c)[0]


def periodic_components(mask: np.ndarray) -> Tuple[np.ndarray, int]:
    """Connected components under axis adjacency with periodic wrap."""
    lab, count = ndimage.label(mask)
    if count == 0:
        return lab, 0
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in range(mask.ndim):
        first = np.take(lab, 0, axis=k)
        last = np.take(lab, -1, axis=k)
        for a, b in zip(first.reshape(-1), last.reshape(-1)):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(count + 1)])
    uniq = {r: i for i, r in enumerate(sorted(set(roots[1:].tolist())), start=1)}
    relabel = np.array([0] + [uniq[r] for r in roots[1:]])
    return relabel[lab], len(uniq)


def large_subdomain_report(c: Cluster, g: ConformalMetric) -> dict:
    """Diameter, interior volume, their scale-free ratio and the component count."""
    require_same_grid(c.grid, g.grid)
    diam, exact = interior_diameter_report(c)
    vol = float(np.sum(volumes(c, g)[:-1]))
    _, comps = periodic_components(c.interior)
    return {"diameter": diam, "diameter_exact": exact, "volume": vol,
            "ratio": diam / vol ** (1.0 / c.grid.n), "components": comps}


# ---------------------------------------------------------------------------
# isoperimetric constants


def euclidean_isoperimetric_constant(n: int) -> float:
    """c_n with P(ball) = c_n |ball|^((n-1)/n); equals 2 sqrt(pi) for n = 2."""
    return n * math.sqrt(math.pi) * gamma(n / 2.0 + 1.0) ** (-1.0 / n)


@dataclass(frozen=True)
class IsoBounds:
    lower: float
    upper: float
    C0: float
    C0_tilde: float
    c_n: float


def isoperimetric_bounds(v, T, n: int) -> IsoBounds:
    """Small-volume perimeter bounds built from the Euclidean constant c_n.

    ``v`` lists interior chamber volumes (an extra exterior entry is
    ignored when ``len(v) == N``).  The bounds count every interface once,
    so they compare with half of :func:`multi_perimeter`.
    """
    om = _omega(T)
    N = om.shape[0]
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if np.any(v < 0):
        raise NegativeVolume("volumes must be nonnegative")
    if v.size == N:
        v = v[:-1]
    off = om[~np.eye(N, dtype=bool)]
    a_max = float(off.max())
    pos = off[off > 0]
    a_min = float(pos.min()) if pos.size else 0.0
    cn = euclidean_isoperimetric_constant(n)
    expo = (n - 1.0) / n
    upper = a_max * cn * float(np.sum(v**expo)) if np.any(v > 0) else 0.0
    lower = a_min * cn * float(np.sum(v)) ** expo if np.any(v > 0) else 0.0
    return IsoBounds(lower=lower, upper=upper, C0=a_min * cn, C0_tilde=a_max * cn, c_n=cn)


# ---------------------------------------------------------------------------
# labeling fields by their nearest well in the degenerate metric

_LOOKUP_CACHE: Dict[tuple, "DistanceLookup"] = {}


class DistanceLookup:
    """d_W(p_i, z) on a regular lattice of z, by shortest paths, interpolated multilinearly.

    Lattice nodes are joined along every primitive offset in {-2..2}^m (m <= 2)
    or {-1, 0, 1}^m (m >= 3), each edge weighted by the action of its straight
    segment.  Each well is an extra node linked to the lattice nodes within
    two spacings, so wells need not sit on the lattice.  One Dijkstra run per
    well fills the table.
    """

    def __init__(self, P: Potential, lower, upper, resolution: int = 64, K: int = 32):
        self.P = P
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        axes = [np.linspace(lo, hi, resolution + 1) if hi > lo else np.array([lo])
                for lo, hi in zip(self.lower, self.upper)]
        self.axes = axes
        shape = tuple(len(a) for a in axes)
        nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, P.m)
        n_nodes = nodes.shape[0]
        index = np.arange(n_nodes).reshape(shape)
        reach = 2 if P.m <= 2 else 1
        rows, cols, weights = [], [], []
        for off in itertools.product(range(-reach, reach + 1), repeat=P.m):
            if not any(off) or math.gcd(*[abs(o) for o in off]) != 1:
                continue
            if any(o != 0 and len(a) == 1 for o, a in zip(off, axes)):
                continue
            # keep one orientation of each undirected edge
            first = next(o for o in off if o != 0)
            if first < 0:
                continue
            src = index[tuple(slice(max(0, -o), n - max(0, o)) for o, n in zip(off, shape))].reshape(-1)
            dst = index[tuple(slice(max(0, o), n - max(0, -o)) for o, n in zip(off, shape))]
            dst = dst.reshape(-1)
            rows.append(src)
            cols.append(dst)
            weights.append(_segment_action(P, nodes[src], nodes[dst], K))
        spacing = max((a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes)
        for i, p in enumerate(P.minima):
            near = np.nonzero(np.linalg.norm(nodes - p, axis=1) <= 2.0 * spacing * math.sqrt(P.m) + 1e-12)[0]
            rows.append(np.full(near.size, n_nodes + i))
            cols.append(near)
            weights.append(_segment_action(P, np.repeat(p[None], near.size, axis=0), nodes[near], K))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        weights = np.maximum(np.concatenate(weights), 1e-300)  # csgraph drops explicit zeros
        total = n_nodes + P.N
        graph = coo_matrix((weights, (rows, cols)), shape=(total, total)).tocsr()
        dist = dijkstra(graph, directed=False, indices=np.arange(n_nodes, total))
        dist[dist < 1e-250] = 0.0
        self.table = dist[:, :n_nodes].reshape((P.N,) + shape)
        keep = [k for k, a in enumerate(axes) if len(a) > 1]
        self._keep = keep
        if keep:
            sub_axes = [axes[k] for k in keep]
            tab = self.table.reshape((P.N,) + tuple(shape[k] for k in keep))
            self._interp = [RegularGridInterpolator(sub_axes, tab[i], method="linear") for i in range(P.N)]
        else:
            self._interp = None

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Distances of shape (N, len(z)) for points z of shape (len(z), m)."""
        z = np.clip(np.asarray(z, dtype=float), self.lower, self.upper)
        if self._interp is None:
            return np.repeat(self.table.reshape(self.P.N, 1), len(z), axis=1)
        zk = z[:, self._keep]
        return np.stack([f(zk) for f in self._interp])


def _segment_action(P: Potential, a: np.ndarray, b: np.ndarray, pieces: int) -> np.ndarray:
    """Midpoint-rule action of the straight segments a -> b, split into ``pieces`` parts."""
    pieces = max(1, min(int(pieces), 8))
    length = np.linalg.norm(b - a, axis=1)
    total = np.zeros(len(a))
    for k in range(pieces):
        t = (k + 0.5) / pieces
        w = evaluate(P, a + t * (b - a), order=0)[0]
        total += np.sqrt(np.maximum(w, 0.0))
    return total * length / pieces


def distance_lookup(P: Potential, values: np.ndarray, resolution: int = 64, K: int = 32) -> DistanceLookup:
    """Memoized lookup covering the wells and the given samples (clamped to the orthant)."""
    pts = np.moveaxis(values, 0, -1).reshape(-1, P.m)
    lo = np.maximum(np.minimum(pts.min(axis=0), P.minima.min(axis=0)), 0.0)
    hi = np.maximum(np.maximum(pts.max(axis=0), P.minima.max(axis=0)), 0.0)
    # snap the box outward to a coarse lattice so nearby fields share tables
    step = 1.0 / 16.0
    lo = np.floor(lo / step) * step
    hi = np.ceil(hi / step) * step
    key = (to_text(P), tuple(lo.tolist()), tuple(hi.tolist()), resolution, K)
    table = _LOOKUP_CACHE.get(key)
    if table is None:
        table = DistanceLookup(P, lo, hi, resolution, K)
        _LOOKUP_CACHE[key] = table
    return table


def label_by_distance(dist: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Index of the smallest row per column, preferring the lowest index on near ties."""
    best = dist.min(axis=0)
    scale = max(float(np.max(np.abs(dist))), 1e-300)
    close = dist <= best + rtol * scale
    return np.argmax(close, axis=0)


def from_field(u: Field, P: Potential, T: Optional[TensionMatrix] = None, resolution: int = 64, K: int = 32) -> Cluster:
    """Label each cell by the well nearest to its value in the degenerate metric."""
    if u.m != P.m:
        raise ShapeError("field and potential disagree on the number of components")
    lookup = distance_lookup(P, u.values, resolution, K)
    pts = np.moveaxis(u.values, 0, -1).reshape(-1, P.m)
    dist = lookup(pts)
    labels = label_by_distance(dist).reshape(u.grid.shape) + 1
    return Cluster(u.grid, labels, P.N)
