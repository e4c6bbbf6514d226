"""Photography fields centered at torus points, and the barycenter that maps them back.

``photo(x)`` is the recovery field of a canonical small cluster placed at x:
a digital ball for two wells, a standard double bubble for three.  Cells are
selected from their offsets in the lattice frame of x, so moving x by whole
cells moves the field by exactly the same cells.

The barycenter embeds each torus factor as a circle, x_k -> (cos, sin) of
2 pi x_k / L_k, averages the embedding against |u| b, and reads the angle
back.  An averaged pair with norm below 1e-9 has no well defined angle and
makes the projection undefined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .cluster.core import Cluster
from .errors import VolumeTooLarge, ZeroMass
from .field.grid import ConformalMetric, Field, TorusGrid
from .potential import Potential
from .recovery import recover, resolve_tau
from .tension import TensionMatrix

UNDEFINED_NORM = 1e-9


# ---------------------------------------------------------------------------
# canonical shapes


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def lattice_offsets(grid: TorusGrid, x) -> np.ndarray:
    """Offsets (n, *shape) from x to every cell center, minimal image, computed in cell units.

    Writing x_k = (j_k + f_k) h_k, the offset of cell i along axis k is
    ((i_k - j_k) wrapped to [-n_k/2, n_k/2)) + 0.5 - f_k, times h_k.  The
    wrap uses integers only, so shifting x by whole cells permutes the
    offsets, bit for bit whenever f_k is computed identically (for example
    for dyadic x on a power-of-two grid).
    """
    x = grid.reduce(np.asarray(x, dtype=float))
    out = []
    for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        pos = x[k] / h
        j = int(math.floor(pos))
        f = pos - j
        if f >= 1.0:  # rounding at the top of the cell
            j, f = j + 1, 0.0
        rel = (np.arange(n) - j) % n
        rel = np.where(rel >= (n + 1) // 2, rel - n, rel)
        delta = (rel + 0.5 - f) * h
        shape = [1] * grid.n
        shape[k] = n
        out.append(np.broadcast_to(delta.reshape(shape), grid.shape))
    return np.stack(out)


def digital_ball(grid: TorusGrid, x, volume_: float) -> np.ndarray:
    """The round(volume / cell) cells nearest to x, nearer shells first.

    Cells at equal distance (to 1e-12 of a cell) are ordered by their
    lattice offset, which keeps the choice translation equivariant.
    """
    count = int(round(volume_ / grid.cell_volume))
    off = lattice_offsets(grid, x)
    r = np.sqrt(np.sum(off * off, axis=0)).reshape(-1)
    h = min(grid.spacing)
    shell = np.round(r / h * 1e12) / 1e12
    keys = [off[k].reshape(-1) for k in range(grid.n - 1, -1, -1)]
    order = np.lexsort(tuple(keys) + (shell,))
    mask = np.zeros(grid.size, dtype=bool)
    mask[order[:count]] = True
    return mask.reshape(grid.shape)


def _segment(r: float, d: float) -> float:
    """Area of the part of a disk of radius r beyond a chord at signed distance d from its center."""
    d = max(-r, min(r, d))
    half = math.sqrt(max((r - d) * (r + d), 0.0))
    theta = math.atan2(half, d)  # half the opening angle
    x = 2.0 * theta
    if x < 0.05:
        # r^2 (x - sin x) / 2 cancels badly for thin segments, so use the series
        x2 = x * x
        diff = x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    else:
        diff = x - math.sin(x)
    return 0.5 * r * r * diff


@dataclass(frozen=True)
class DoubleBubble:
    """Standard planar double bubble: outer radii r1 >= r2, centers D apart, middle arc radius r3."""

    r1: float
    r2: float
    D: float
    a: float  # chord distance from the first center toward the second
    r3: float  # inf when the bubbles are equal
    s: float  # axis coordinate of the middle arc's center, measured from the first center
    swapped: bool  # True when chamber 1 is the smaller bubble

    @property
    def chord_half(self) -> float:
        return math.sqrt(max(self.r1**2 - self.a**2, 0.0))

    def areas(self) -> Tuple[float, float]:
        cap = 0.0 if math.isinf(self.r3) else _segment(self.r3, self.s - self.a)
        big = math.pi * self.r1**2 - _segment(self.r1, self.a) - cap
        small = math.pi * self.r2**2 - _segment(self.r2, self.D - self.a) + cap
        return big, small

    @property
    def extent(self) -> float:
        """Largest distance from the volume-weighted center to the outer arcs."""
        A1, A2 = self.areas()
        c = A2 * self.D / (A1 + A2)
        return max(c + self.r1, self.D - c + self.r2)


def _bubble_from_radii(r1: float, r2: float, swapped: bool) -> DoubleBubble:
    D = math.sqrt(r1 * r1 - r1 * r2 + r2 * r2)
    a = (D * D + r1 * r1 - r2 * r2) / (2.0 * D)
    if math.isclose(r1, r2, rel_tol=1e-14):
        r3, s = math.inf, math.inf
    else:
        r3 = r1 * r2 / (r1 - r2)
        half = math.sqrt(max(r1 * r1 - a * a, 0.0))
        s = a + math.sqrt(r3 * r3 - half * half)
    return DoubleBubble(r1, r2, D, a, r3, s, swapped)


def double_bubble(v1: float, v2: float) -> DoubleBubble:
    """Geometry of the standard double bubble enclosing areas v1 and v2.

    Three circular arcs meet at 120 degrees, so D^2 = r1^2 - r1 r2 + r2^2 and
    the middle arc has curvature 1/r2 - 1/r1.  The radius ratio is found by
    root finding on the area ratio, then everything is scaled.
    """
    if v1 <= 0 or v2 <= 0:
        raise ValueError("double bubble areas must be positive")
    swapped = v2 > v1
    big, small = (v2, v1) if swapped else (v1, v2)
    target = small / big

    def ratio(kappa):
        A1, A2 = _bubble_from_radii(1.0, kappa, swapped).areas()
        return A2 / A1 - target

    kappa = 1.0 if target >= 1.0 - 1e-15 else brentq(ratio, 1e-6, 1.0, xtol=1e-15, rtol=1e-15)
    unit = _bubble_from_radii(1.0, kappa, swapped)
    scale = math.sqrt(big / unit.areas()[0])
    return _bubble_from_radii(scale, kappa * scale, swapped)


def double_bubble_labels(grid: TorusGrid, x, bubble: DoubleBubble, axis: int = 0) -> np.ndarray:
    """Labels 1, 2, 3 of the double bubble whose volume-weighted center is x, axis along ``axis``."""
    off = lattice_offsets(grid, x)
    A1, A2 = bubble.areas()
    shift = A2 * bubble.D / (A1 + A2)  # center of the big disk sits this far behind x
    along = off[axis] + shift
    perp2 = np.sum(off * off, axis=0) - off[axis] ** 2
    inA = along**2 + perp2 < bubble.r1**2
    inB = (along - bubble.D) ** 2 + perp2 < bubble.r2**2
    if math.isinf(bubble.r3):
        inC = along > bubble.a
    else:
        inC = (along - bubble.s) ** 2 + perp2 < bubble.r3**2
    small = (inB & ~inA) | (inA & inB & inC)
    big = inA & ~small
    labels = np.full(grid.shape, 3, dtype=np.int64)
    first, second = (2, 1) if bubble.swapped else (1, 2)
    labels[big] = first
    labels[small] = second
    return labels


def _tangent_ball_labels(grid: TorusGrid, x, v1: float, v2: float, axis: int = 0) -> np.ndarray:
    n = grid.n
    r1 = (v1 / _unit_ball_volume(n)) ** (1.0 / n)
    r2 = (v2 / _unit_ball_volume(n)) ** (1.0 / n)
    off = lattice_offsets(grid, x)
    c1 = -(v2 / (v1 + v2)) * (r1 + r2)
    along = off[axis] - c1
    perp2 = np.sum(off * off, axis=0) - off[axis] ** 2
    labels = np.full(grid.shape, 3, dtype=np.int64)
    labels[(along - (r1 + r2)) ** 2 + perp2 < r2**2] = 2
    labels[along**2 + perp2 < r1**2] = 1
    return labels


@dataclass
class CanonicalShape:
    cluster: Cluster
    rule: str
    extent: float


def canonical_cluster(grid: TorusGrid, x, v, N: int, shape_rule: str = "double-bubble") -> CanonicalShape:
    """Canonical small cluster with interior volumes ``v`` centered at x."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    n = grid.n
    limit = min(grid.lengths) / 4.0
    if N == 2:
        radius = (v[0] / _unit_ball_volume(n)) ** (1.0 / n)
        if radius > limit:
            raise VolumeTooLarge(f"ball of radius {radius:.4g} does not fit in radius {limit:.4g}")
        labels = np.where(digital_ball(grid, x, v[0]), 1, 2)
        return CanonicalShape(Cluster(grid, labels, 2), "ball", radius)
    if N != 3:
        raise ValueError("canonical shapes exist for two or three wells")
    if v.size != 2:
        raise ValueError("three wells need two interior volumes")
    if n == 1:
        extent = max(v[0], v[1])
        if extent > limit:
            raise VolumeTooLarge(f"segments of length {v} do not fit in radius {limit:.4g}")
        off = lattice_offsets(grid, x)[0]
        labels = np.full(grid.shape, 3, dtype=np.int64)
        start = -0.5 * (v[0] + v[1])
        labels[(off >= start) & (off < start + v[0])] = 1
        labels[(off >= start + v[0]) & (off < start + v[0] + v[1])] = 2
        return CanonicalShape(Cluster(grid, labels, 3), "segments", extent)
    if shape_rule == "double-bubble" and n == 2:
        bubble = double_bubble(v[0], v[1])
        if bubble.extent > limit:
            raise VolumeTooLarge(f"double bubble of extent {bubble.extent:.4g} does not fit in radius {limit:.4g}")
        return CanonicalShape(Cluster(grid, double_bubble_labels(grid, x, bubble), 3), "double-bubble",
                              bubble.extent)
    if shape_rule not in ("double-bubble", "tangent-balls"):
        raise ValueError(f"unknown shape rule {shape_rule!r}")
    r = [(vi / _unit_ball_volume(n)) ** (1.0 / n) for vi in v]
    extent = r[0] + r[1]
    if extent > limit:
        raise VolumeTooLarge(f"tangent balls of extent {extent:.4g} do not fit in radius {limit:.4g}")
    return CanonicalShape(Cluster(grid, _tangent_ball_labels(grid, x, v[0], v[1]), 3), "tangent-balls", extent)


# ---------------------------------------------------------------------------
# photography and barycenter


def photo(x, v, eps: float, P: Potential, T: TensionMatrix, g: ConformalMetric,
          shape_rule: str = "double-bubble", tau=None, K: int = 1024) -> Field:
    """Recovery field of the canonical cluster at x, with field volume ``v`` in value space.

    ``v`` holds the chamber volumes (one per interior chamber); the field
    volume target is sum_i v_i p_i.  ``tau`` defaults to sqrt(eps).
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    shape = canonical_cluster(g.grid, x, v, P.N, shape_rule)
    tau = resolve_tau(eps, "sqrt" if tau is None else tau)
    target = P.minima[:-1].T @ v
    return recover(shape.cluster, P, T, eps, tau, g, target, K).u


@dataclass(frozen=True)
class Barycenter:
    embedded: np.ndarray  # (2n,) pairs (cos, sin) per axis
    projected: Optional[np.ndarray]  # None when undefined


def embed(grid: TorusGrid, x) -> np.ndarray:
    """Flat torus embedding in R^(2n) (unit circle per axis)."""
    x = np.asarray(x, dtype=float)
    ang = 2.0 * np.pi * x / np.asarray(grid.lengths)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1).reshape(x.shape[:-1] + (2 * grid.n,))


def barycenter(u: Field, g: ConformalMetric) -> Barycenter:
    """Extrinsic barycenter of |u| b dx and its projection back to the torus."""
    grid = u.grid
    mass = np.sqrt(np.sum(u.values**2, axis=0)) * g.b * grid.cell_volume
    total = float(mass.sum())
    if total <= 0.0:
        raise ZeroMass("field has zero mass")
    emb = np.empty(2 * grid.n)
    for k in range(grid.n):
        ang = 2.0 * np.pi * grid.axis_coordinates(k) / grid.lengths[k]
        # the mass marginal along axis k reduces the average to a 1-D sum
        marginal = mass.sum(axis=tuple(j for j in range(grid.n) if j != k))
        emb[2 * k] = float(np.dot(marginal, np.cos(ang))) / total
        emb[2 * k + 1] = float(np.dot(marginal, np.sin(ang))) / total
    pairs = emb.reshape(grid.n, 2)
    if np.any(np.hypot(pairs[:, 0], pairs[:, 1]) < UNDEFINED_NORM):
        return Barycenter(emb, None)
    ang = np.arctan2(pairs[:, 1], pairs[:, 0])
    proj = np.mod(ang / (2.0 * np.pi) * np.asarray(grid.lengths), np.asarray(grid.lengths))
    return Barycenter(emb, grid.reduce(proj))


@dataclass
class HomotopyReport:
    max_dist: float
    rows: List[dict]

    @property
    def undefined(self) -> int:
        """Rows whose barycenter had no projection."""
        return sum(1 for r in self.rows if r.get("failure") == "undefined projection")

    @property
    def failed(self) -> int:
        """Rows with any failure, including shapes too large for the torus."""
        return sum(1 for r in self.rows if r.get("failure") is not None)


def sample_lattice(grid: TorusGrid, k: int) -> List[np.ndarray]:
    """k^n points x = L * (i_1, ..., i_n) / k."""
    axes = [np.arange(k) * L / k for L in grid.lengths]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    return [row.copy() for row in mesh]


def homotopy_check(v, eps: float, P: Potential, T: TensionMatrix, g: ConformalMetric,
                   sample: Sequence, shape_rule: str = "double-bubble", tau=None, K: int = 1024) -> HomotopyReport:
    """Distance between each sample point and the projected barycenter of its photograph.

    An undefined projection counts as infinite distance, and so does a
    volume whose canonical cluster does not fit on the torus; the reason is
    kept in the row's ``failure`` entry.
    """
    if len(sample) == 0:
        raise ValueError("sample must be nonempty")
    rows = []
    for x in sample:
        x = g.grid.reduce(np.asarray(x, dtype=float))
        try:
            u = photo(x, v, eps, P, T, g, shape_rule, tau, K)
        except VolumeTooLarge as exc:
            rows.append({"x": x, "projected": None, "distance": math.inf, "failure": str(exc)})
            continue
        bc = barycenter(u, g)
        if bc.projected is None:
            dist = math.inf
            failure = "undefined projection"
        else:
            dist = float(g.grid.distance(bc.projected, x))
            failure = None
        rows.append({"x": x, "projected": bc.projected, "distance": dist, "failure": failure})
    return HomotopyReport(max(r["distance"] for r in rows), rows)


@dataclass(frozen=True)
class Concentration:
    x_star: np.ndarray
    mass_fraction: float


def concentration_report(u: Field, g: ConformalMetric, r: float) -> Concentration:
    """Cell center maximizing the |u| b mass inside the periodic digital ball of radius r/2.

    All centers are scored at once by an FFT convolution with the digital
    ball (cells whose centers lie within r/2 of the candidate).
    """
    grid = u.grid
    if not r < min(grid.lengths) / 2.0:
        raise ValueError("r must be below half the smallest torus length")
    mass = np.sqrt(np.sum(u.values**2, axis=0)) * g.b * grid.cell_volume
    total = float(mass.sum())
    if total <= 0.0:
        raise ZeroMass("field has zero mass")
    # ball around cell 0 in index space: offsets measured between cell centers
    idx = np.meshgrid(*[np.arange(n) for n in grid.shape], indexing="ij")
    d2 = np.zeros(grid.shape)
    for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        rel = np.where(idx[k] >= (n + 1) // 2, idx[k] - n, idx[k])
        d2 = d2 + (rel * h) ** 2
    ball = (d2 <= (0.5 * r) ** 2).astype(float)
    # correlation: score[c] = sum_x mass[x] ball[x - c]
    axes = tuple(range(grid.n))
    score = np.fft.irfftn(np.fft.rfftn(mass) * np.conj(np.fft.rfftn(ball)), s=grid.shape, axes=axes)
    best = np.unravel_index(int(np.argmax(score)), grid.shape)
    x_star = np.array([(best[k] + 0.5) * grid.spacing[k] for k in range(grid.n)])
    return Concentration(x_star, min(float(score[best]) / total, 1.0))


def continuity_profile(x, deltas: Sequence[float], v, eps: float, P: Potential, T: TensionMatrix,
                       g: ConformalMetric, direction=None, **kw) -> Tuple[np.ndarray, np.ndarray, float]:
    """L2 distances between photo(x) and photo(x + delta e) and the fitted exponent of the ladder."""
    grid = g.grid
    e = np.zeros(grid.n)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    base = photo(x, v, eps, P, T, g, **kw).values
    deltas = np.asarray(deltas, dtype=float)
    dists = []
    for d in deltas:
        w = photo(np.asarray(x, dtype=float) + d * e, v, eps, P, T, g, **kw).values
        diff = w - base
        dists.append(math.sqrt(float(np.sum(diff * diff * g.b)) * grid.cell_volume))
    dists = np.asarray(dists)
    ok = dists > 0
    exponent = float(np.polyfit(np.log(deltas[ok]), np.log(dists[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return deltas, dists, exponent
