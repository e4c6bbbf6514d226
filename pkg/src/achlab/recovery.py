"""Recovery fields built from clusters by composing 1-D transition profiles with signed distances.

For a pair of wells (i, j) with stored path c_ij, the profile solves
eps^2 |q'|^2 = tau + W(q) along the path.  Its arclength-to-time map

    psi(s) = int_0^s eps |c'(r)| / sqrt(tau + W(c(r))) dr

is tabulated by the midpoint rule and inverted onto a uniform grid of t in
[0, eta], eta = psi(1).  A field is assembled cell by cell from the shifted
signed distances t_i = d_i + zeta_i; the shifts zeta are solved so that the
volume matches its target, and the remaining mismatch is removed by a cone
patch inside chamber 1 followed by an exact constant shift.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from . import kernels
from .cluster.core import Cluster, distance_lookup, from_field, multi_perimeter
from .errors import BadTau, EmptyBoundary, EmptyInterior, NoBallHost, ResolutionWarning
from .field.energy import energy, project_volume, volume
from .field.grid import ConformalMetric, Field, require_same_grid
from .potential import Potential, evaluate
from .tension import TensionMatrix, path_length

BRUTE_FORCE_FACES = 100_000


# ---------------------------------------------------------------------------
# signed distances


@dataclass
class SignedDistanceSet:
    """d[i] is the signed periodic distance to the boundary of chamber i+1 (negative inside)."""

    d: np.ndarray
    exact: bool = True


def _boundary_faces(mask: np.ndarray, grid) -> Tuple[np.ndarray, np.ndarray]:
    faces, axes = [], []
    for k in range(grid.n):
        cross = mask != np.roll(mask, -1, axis=k)
        idx = np.nonzero(cross)
        if idx[0].size == 0:
            continue
        pos = np.stack([(idx[j] + (1.0 if j == k else 0.5)) * grid.spacing[j] for j in range(grid.n)], axis=1)
        faces.append(pos)
        axes.append(np.full(idx[0].size, k, dtype=np.int64))
    if not faces:
        return np.zeros((0, grid.n)), np.zeros(0, dtype=np.int64)
    return np.concatenate(faces), np.concatenate(axes)


def _tiled_distance(mask: np.ndarray, grid) -> np.ndarray:
    """Approximate unsigned distance to the boundary via Euclidean transforms of a 3x tiled copy."""
    reps = (3,) * grid.n
    big = np.tile(mask, reps)
    centre = tuple(slice(s, 2 * s) for s in grid.shape)
    inside = ndimage.distance_transform_edt(big, sampling=grid.spacing)[centre]
    outside = ndimage.distance_transform_edt(~big, sampling=grid.spacing)[centre]
    half = 0.5 * min(grid.spacing)
    return np.where(mask, inside, outside) - half


def signed_distances(c: Cluster) -> SignedDistanceSet:
    """Signed periodic distance from each cell center to every interior chamber boundary.

    Up to ``BRUTE_FORCE_FACES`` boundary faces the distance is exact (nearest
    face, brute force); above that a tiled Euclidean distance transform is
    used and the result is flagged inexact.
    """
    grid = c.grid
    if not np.any(c.interior):
        raise EmptyInterior("cluster interior is empty")
    pts = grid.points()
    out = np.empty((c.N - 1,) + grid.shape)
    exact = True
    for i in range(1, c.N):
        mask = c.labels == i
        if not np.any(mask):
            out[i - 1] = np.inf
            continue
        if np.all(mask):
            raise EmptyBoundary(f"chamber {i} fills the torus")
        faces, axes = _boundary_faces(mask, grid)
        if len(faces) <= BRUTE_FORCE_FACES:
            dist = kernels.face_distances(pts, faces, axes, grid.spacing, grid.lengths).reshape(grid.shape)
        else:
            dist = _tiled_distance(mask, grid)
            exact = False
        out[i - 1] = np.where(mask, -dist, dist)
    return SignedDistanceSet(out, exact)


# ---------------------------------------------------------------------------
# one-dimensional profiles


@dataclass
class PairProfile:
    """Inverse profile y(t) on a uniform t grid for the path from p_i to p_j."""

    i: int
    j: int
    t: np.ndarray
    y: np.ndarray
    eta: float
    path: np.ndarray
    length: float
    psi_s: np.ndarray = field(repr=False, default=None)
    psi: np.ndarray = field(repr=False, default=None)

    def fraction(self, t) -> np.ndarray:
        """Path parameter y(t), clamped to 0 for t <= 0 and 1 for t >= eta."""
        return np.interp(t, self.t, self.y)

    def point(self, s) -> np.ndarray:
        """Point of the stored polyline at parameter s, shape (m, len(s))."""
        s = np.asarray(s, dtype=float)
        nodes = np.linspace(0.0, 1.0, self.path.shape[0])
        return np.stack([np.interp(s, nodes, self.path[:, c]) for c in range(self.path.shape[1])])

    def q(self, t) -> np.ndarray:
        return self.point(self.fraction(t))


@dataclass
class ProfileTable:
    eps: float
    tau: float
    K: int
    pairs: Dict[Tuple[int, int], PairProfile]
    C1: float
    C2: float
    C3: float

    @property
    def eta(self) -> float:
        return max(p.eta for p in self.pairs.values())

    def pair(self, i: int, j: int) -> PairProfile:
        return self.pairs[(i, j)]


def _profile_for_path(P: Potential, path: np.ndarray, eps: float, tau: float, K: int, i: int, j: int) -> PairProfile:
    nodes = path.shape[0]
    cells = max(16 * K, nodes - 1)
    sub = int(math.ceil(cells / (nodes - 1)))
    s_nodes = np.linspace(0.0, 1.0, nodes)
    # fine parameter grid: each polyline segment split into `sub` pieces
    frac = (np.arange(sub) / sub)[None, :]
    s_fine = np.concatenate([(s_nodes[:-1, None] + frac * np.diff(s_nodes)[:, None]).reshape(-1), [1.0]])
    pts = np.stack([np.interp(s_fine, s_nodes, path[:, c]) for c in range(path.shape[1])], axis=1)
    mids = 0.5 * (pts[1:] + pts[:-1])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    w = evaluate(P, mids, order=0)[0]
    dpsi = eps * seg / np.sqrt(tau + w)
    psi = np.concatenate([[0.0], np.cumsum(dpsi)])
    eta = float(psi[-1])
    t = np.linspace(0.0, eta, K)
    y = np.interp(t, psi, s_fine)
    y[0], y[-1] = 0.0, 1.0
    return PairProfile(i=i, j=j, t=t, y=y, eta=eta, path=path, length=path_length(path), psi_s=s_fine, psi=psi)


def build_profile(P: Potential, T: TensionMatrix, eps: float, tau: float, K: int = 1024) -> ProfileTable:
    """Transition profiles for every well pair from the stored tension paths."""
    if not tau > 0:
        raise BadTau(f"tau must be positive, got {tau}")
    if K < 64:
        raise ValueError("K must be at least 64")
    if not T.paths:
        raise ValueError("tension matrix carries no paths")
    pairs = {}
    for (i, j), path in T.paths.items():
        pairs[(i, j)] = _profile_for_path(P, np.asarray(path, dtype=float), eps, tau, K, i, j)
    C1 = max(p.length for p in pairs.values()) / math.sqrt(tau)
    C2 = max(float(np.max(np.linalg.norm(p.path, axis=1))) for p in pairs.values())
    # |dq/dt| = sqrt(tau + W(q)) / eps along each profile
    C3 = max(float(np.sqrt(tau + evaluate(P, p.path, order=0)[0]).max()) for p in pairs.values())
    return ProfileTable(eps=eps, tau=tau, K=K, pairs=pairs, C1=C1, C2=C2, C3=C3)


# ---------------------------------------------------------------------------
# assembly


def assemble(t: np.ndarray, profile: ProfileTable, P: Potential) -> np.ndarray:
    """Field values (m, cells) from shifted distances t of shape (N-1, cells).

    Chambers are added from N-1 down to 1.  The running state is a value z
    and a weight vector mu over the wells describing which wells z mixes.
    Adding chamber i with time t_i: for t_i <= 0 the state becomes (p_i, e_i);
    otherwise

        z' = sum_k mu_k c_ik(y_ik) + Y (z - sum_k mu_k p_k),   Y = sum_k mu_k y_ik,
        mu'_i = sum_k mu_k (1 - y_ik),  mu'_k = mu_k y_ik,

    which equals p_i at t_i = 0 and leaves the state untouched once t_i
    exceeds every profile width.  Each step is Lipschitz in t, and near an
    interface between chambers i and k the value runs along the stored path.
    """
    N, m = P.N, P.m
    cells = t.shape[1]
    wells = P.minima
    z = np.repeat(wells[N - 1][:, None], cells, axis=1)
    mu = np.zeros((N, cells))
    mu[N - 1] = 1.0
    for i in range(N - 2, -1, -1):
        ti = t[i]
        new_z = np.zeros((m, cells))
        new_mu = np.zeros((N, cells))
        base = np.zeros((m, cells))
        Y = np.zeros(cells)
        for k in range(i + 1, N):
            wk = mu[k]
            active = wk > 0
            if not np.any(active):
                continue
            prof = profile.pair(i, k)
            y = prof.fraction(ti)
            new_z += wk * prof.point(y)
            base += wk * wells[k][:, None]
            Y += wk * y
            new_mu[i] += wk * (1.0 - y)
            new_mu[k] = wk * y
        new_z += Y * (z - base)
        inside = ti <= 0
        new_z[:, inside] = wells[i][:, None]
        new_mu[:, inside] = 0.0
        new_mu[i, inside] = 1.0
        z, mu = new_z, new_mu
    return z


@dataclass
class RecoveryResult:
    u: Field
    zeta: np.ndarray
    nu: np.ndarray  # volume mismatch before the patch
    xi: np.ndarray  # patch amplitude actually used
    xi_formula: np.ndarray  # the amplitude predicted by n omega_{n-1} eps^((1-n)/n) nu
    host: Optional[Tuple[int, ...]]
    patched: bool
    eta: float
    tau: float
    profile: ProfileTable
    volume_error: np.ndarray
    bracketed: bool = True


def chamber_weights(V: np.ndarray, P: Potential) -> np.ndarray:
    """Interior chamber volumes w with sum_i w_i p_i = V (least squares when m > N - 1)."""
    A = P.minima[:-1].T  # (m, N-1)
    if A.shape[0] == A.shape[1]:
        return np.linalg.solve(A, V)
    return np.linalg.lstsq(A, V, rcond=None)[0]


class _VolumeModel:
    """Volume of the assembled field as a function of the shifts, restricted to a band."""

    def __init__(self, dist: np.ndarray, profile: ProfileTable, P: Potential, g: ConformalMetric, reach: float):
        self.P = P
        self.profile = profile
        flat = dist.reshape(dist.shape[0], -1)
        bw = g.b.reshape(-1) * g.grid.cell_volume
        band = np.any(np.abs(flat) <= reach, axis=0)
        self.band_d = flat[:, band]
        self.band_w = bw[band]
        rest = ~band
        if np.any(rest):
            vals = assemble(flat[:, rest], profile, P)
            self.fixed = vals @ bw[rest]
        else:
            self.fixed = np.zeros(P.m)

    def __call__(self, zeta: np.ndarray) -> np.ndarray:
        vals = assemble(self.band_d + zeta[:, None], self.profile, self.P)
        return self.fixed + vals @ self.band_w


def _solve_shifts(model: _VolumeModel, target_w: np.ndarray, eta: float, P: Potential,
                  tol: float = 1e-10, sweeps: int = 50) -> Tuple[np.ndarray, bool]:
    n_int = P.N - 1
    zeta = np.zeros(n_int)
    bracketed = True
    for _ in range(sweeps):
        for i in range(n_int):
            def f(x):
                z = zeta.copy()
                z[i] = x
                return chamber_weights(model(z), P)[i] - target_w[i]

            lo, hi = 0.0, eta
            flo, fhi = f(lo), f(hi)
            # the volume model is valid for shifts in [-2 eta, 2 eta]
            if flo < 0:
                lo, flo = -2.0 * eta, f(-2.0 * eta)
                bracketed = False
            if fhi > 0:
                hi, fhi = 2.0 * eta, f(2.0 * eta)
                bracketed = False
            if flo < 0 or fhi > 0:
                zeta[i] = lo if abs(flo) < abs(fhi) else hi
                continue
            if flo == 0.0 or fhi == 0.0:
                zeta[i] = lo if flo == 0.0 else hi
                continue
            # Brent's method keeps the bisection bracket and converges superlinearly
            zeta[i] = brentq(f, lo, hi, xtol=1e-14 * eta, rtol=4 * np.finfo(float).eps, maxiter=200)
        err = chamber_weights(model(zeta), P) - target_w
        if np.max(np.abs(err)) <= tol * (1.0 + np.max(np.abs(target_w))):
            break
    return zeta, bracketed


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def resolve_tau(eps: float, tau_rule: Union[str, float, Callable[[float], float]] = "sqrt") -> float:
    """Map eps to tau: ``"sqrt"`` gives sqrt(eps), ``"linear"`` gives eps, numbers are constants."""
    if callable(tau_rule):
        return float(tau_rule(eps))
    if isinstance(tau_rule, str):
        rule = tau_rule.strip().lower()
        if rule in ("sqrt", "auto"):
            return math.sqrt(eps)
        if rule == "linear":
            return float(eps)
        return float(rule)
    return float(tau_rule)


def recover(c: Cluster, P: Potential, T: TensionMatrix, eps: float, tau: float, g: ConformalMetric,
            v_target=None, K: int = 1024, profile: Optional[ProfileTable] = None,
            distances: Optional[SignedDistanceSet] = None) -> RecoveryResult:
    """Recovery field of ``c`` with exact volume, plus every intermediate quantity."""
    require_same_grid(c.grid, g.grid)
    if c.N != P.N:
        raise ValueError("cluster and potential disagree on the number of wells")
    if not np.any(c.labels == 1):
        raise EmptyInterior("chamber 1 is empty")
    grid = c.grid
    if max(grid.spacing) > eps / 8.0:
        warnings.warn(f"grid spacing {max(grid.spacing):.3g} exceeds eps/8 = {eps / 8:.3g}", ResolutionWarning,
                      stacklevel=2)
    prof = profile if profile is not None else build_profile(P, T, eps, tau, K)
    sd = distances if distances is not None else signed_distances(c)
    eta = prof.eta
    b = g.b
    cell = grid.cell_volume
    if v_target is None:
        from .cluster.core import volumes as chamber_volumes
        w_target = chamber_volumes(c, g)[:-1]
        v_target = P.minima[:-1].T @ w_target
    v_target = np.atleast_1d(np.asarray(v_target, dtype=float))
    w_target = chamber_weights(v_target, P)

    model = _VolumeModel(sd.d, prof, P, g, reach=3.0 * eta + 2.0 * max(grid.spacing))
    zeta, bracketed = _solve_shifts(model, w_target, eta, P)
    flat_d = sd.d.reshape(sd.d.shape[0], -1)
    values = assemble(flat_d + zeta[:, None], prof, P).reshape((P.m,) + grid.shape)
    u = Field(grid, values)
    nu = volume(u, g) - v_target

    n = grid.n
    r_ball = eps ** (1.0 / n)
    xi_formula = n * _unit_ball_volume(n - 1) * eps ** ((1.0 - n) / n) * nu
    d1 = sd.d[0]
    host = tuple(int(x) for x in np.unravel_index(int(np.argmin(d1)), grid.shape))
    depth = -float(d1[host]) - float(zeta[0])
    fits = r_ball < 0.5 * min(grid.lengths)
    xi = np.zeros(P.m)
    patched = False
    if depth >= r_ball and fits:
        centre = np.array([(host[k] + 0.5) * grid.spacing[k] for k in range(n)])
        dist = grid.distance(grid.points(), centre).reshape(grid.shape)
        cone = np.clip(1.0 - dist / r_ball, 0.0, None)
        weight = float(np.sum(cone * b) * cell)
        if weight > 0:
            xi = -nu / weight
            values = values + xi.reshape((-1,) + (1,) * n) * cone[None]
            patched = True
    else:
        warnings.warn(f"chamber 1 cannot host a ball of radius {r_ball:.3g} (depth {depth:.3g}); "
                      "using a constant shift only", NoBallHost, stacklevel=2)
    u = project_volume(Field(grid, values), v_target, g)
    err = volume(u, g) - v_target
    return RecoveryResult(u=u, zeta=zeta, nu=nu, xi=xi, xi_formula=xi_formula, host=host if patched else None,
                          patched=patched, eta=eta, tau=prof.tau, profile=prof, volume_error=err,
                          bracketed=bracketed)


def modica_baldo(c: Cluster, P: Potential, T: TensionMatrix, eps: float, tau: float, g: ConformalMetric,
                 v_target=None, K: int = 1024) -> Field:
    """Volume-exact recovery field of the cluster ``c`` at scale ``eps``."""
    return recover(c, P, T, eps, tau, g, v_target, K).u


# ---------------------------------------------------------------------------
# ladders and diagnostics


@dataclass
class GammaSweep:
    rows: List[dict]

    @property
    def gaps(self) -> List[float]:
        return [r["gap"] for r in self.rows]

    @property
    def gaps_decreasing(self) -> bool:
        gaps = self.gaps
        return all(b < a for a, b in zip(gaps, gaps[1:]))


def gamma_sweep(c: Cluster, P: Potential, T: TensionMatrix, g: ConformalMetric, eps_list,
                tau_rule="sqrt", v_target=None, K: int = 1024) -> GammaSweep:
    """Energies of recovery fields along a decreasing eps ladder versus the multi-perimeter."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    per = multi_perimeter(c, T, g)
    sd = signed_distances(c)
    rows = []
    for eps in eps_list:
        tau = resolve_tau(eps, tau_rule)
        res = recover(c, P, T, eps, tau, g, v_target, K, distances=sd)
        E = energy(res.u, eps, P, g)
        rows.append({"eps": eps, "tau": tau, "energy": E, "perimeter": per, "gap": E - per,
                     "gap_over_eps": (E - per) / eps, "volume_error": float(np.max(np.abs(res.volume_error)))})
    return GammaSweep(rows)


def sup_measure_check(u: Field, P: Potential, T: TensionMatrix, g: ConformalMetric) -> Tuple[float, float]:
    """Compare twice the supremum of the measures |grad(phi_i o u)| with the multi-perimeter of the labels."""
    require_same_grid(u.grid, g.grid)
    grid = u.grid
    lookup = distance_lookup(P, u.values)
    pts = np.moveaxis(u.values, 0, -1).reshape(-1, P.m)
    phi = lookup(pts).reshape((P.N,) + grid.shape)
    grad = np.zeros((P.N,) + grid.shape)
    for k, h in enumerate(grid.spacing):
        d = (np.roll(phi, -1, axis=k + 1) - phi) / h
        grad += d * d
    grad = np.sqrt(grad)
    weight = g.rho ** (grid.n - 1) * grid.cell_volume
    lhs = 2.0 * float(np.sum(grad.max(axis=0) * weight))
    rhs = multi_perimeter(from_field(u, P, T), T, g)
    return lhs, rhs


def lipschitz_estimate(u: Field) -> float:
    """Largest forward-difference gradient norm of the field."""
    acc = np.zeros(u.grid.shape)
    for k, h in enumerate(u.grid.spacing):
        d = (np.roll(u.values, -1, axis=k + 1) - u.values) / h
        acc += np.sum(d * d, axis=0)
    return float(np.sqrt(acc.max()))
