"""Multi-well potentials: construction, analytic evaluation and sampled class checks.

Three evaluation rules are built in:

``scalar-double-well``
    W(u) = u^2 (1 - u)^2 with wells {1, 0}.
``product-triple-well``
    W(z) = |z - p1|^2 |z - p2|^2 |z|^2 on R^2 with wells {p1, p2, 0}.
``spliced``
    The product form blended into the tail |z|^(2 + tau) across the shell
    R <= |z| <= 2R with a smoothstep weight (C^1 in the radius).

The last well is always the origin.  Values, gradients and Hessians are
closed-form; nothing here uses finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .errors import DegenerateMinima
from .rng import SplitMix64

FORMS = ("scalar-double-well", "product-triple-well", "spliced")


@dataclass(frozen=True)
class Growth:
    """Exponents and constants of k3 |z|^p1 < W(z) < k4 |z|^p2 for |z| >= R."""

    p1: float
    p2: float
    k3: float
    k4: float
    R: float


@dataclass(frozen=True)
class Splice:
    radius: float
    tau: float


@dataclass(frozen=True, eq=False)
class Potential:
    m: int
    N: int
    minima: np.ndarray
    form: str
    growth: Growth
    splice: Optional[Splice] = None

    def __post_init__(self):
        arr = np.array(self.minima, dtype=float).reshape(self.N, self.m)
        arr.setflags(write=False)
        object.__setattr__(self, "minima", arr)
        if self.form not in FORMS:
            raise ValueError(f"unknown potential form {self.form!r}")

    def __call__(self, z):
        return evaluate(self, z, order=0)[0]

    def describe(self) -> str:
        return to_text(self).replace("\n", "; ").strip("; ")


def build_double_well() -> Potential:
    """W(u) = u^2 (1-u)^2 with stored wells p1 = 1, p2 = 0."""
    # For |u| >= 2 the ratio W/u^4 = (1 - 1/u)^2 lies in [1/4, 9/4], both
    # ends attained at |u| = 2, so the strict bounds need a little slack.
    growth = Growth(p1=4.0, p2=4.0, k3=0.25 * 0.99, k4=2.25 * 1.01, R=2.0)
    return Potential(m=1, N=2, minima=np.array([[1.0], [0.0]]), form="scalar-double-well", growth=growth)


def build_product_triple_well(p1, p2, splice: bool = False, splice_radius: float | None = None,
                              splice_tau: float = 0.5) -> Potential:
    """Degree-six product well vanishing at ``p1``, ``p2`` and the origin.

    With ``splice=True`` the polynomial is blended into |z|^(2+splice_tau)
    beyond ``splice_radius`` (default: 2 max|p_i| + 1).
    """
    a = np.asarray(p1, dtype=float).reshape(-1)
    b = np.asarray(p2, dtype=float).reshape(-1)
    if a.shape != (2,) or b.shape != (2,):
        raise DegenerateMinima("both wells must be points of R^2")
    if np.any(a < 0) or np.any(b < 0):
        raise DegenerateMinima("wells must lie in the closed nonnegative quadrant")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateMinima("a well coincides with the origin")
    if abs(a[0] * b[1] - a[1] * b[0]) <= 1e-12 * na * nb:
        raise DegenerateMinima("wells are linearly dependent")
    minima = np.array([a, b, [0.0, 0.0]])
    if not splice:
        # W/|z|^6 = (|z-p1|/|z|)^2 (|z-p2|/|z|)^2 is pinned between
        # (1 -/+ 1/4)^4 once |z| >= 4 max|p_i|.
        R = 4.0 * max(na, nb)
        growth = Growth(6.0, 6.0, 0.75**4 * 0.99, 1.25**4 * 1.01, R)
        return Potential(m=2, N=3, minima=minima, form="product-triple-well", growth=growth)
    if splice_tau <= 0:
        raise ValueError("splice_tau must be positive")
    radius = float(splice_radius) if splice_radius is not None else 2.0 * max(na, nb) + 1.0
    if radius <= max(na, nb):
        raise ValueError("splice radius must enclose the wells")
    p = 2.0 + splice_tau
    growth = Growth(p, p, 0.99, 1.01, 2.0 * radius)
    return Potential(m=2, N=3, minima=minima, form="spliced", growth=growth,
                     splice=Splice(radius, float(splice_tau)))


# ---------------------------------------------------------------------------
# evaluation


def _as_points(P: Potential, z):
    z = np.asarray(z, dtype=float)
    if P.m == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != P.m:
        raise ValueError(f"points must have {P.m} components, got shape {z.shape}")
    return z


def _double_well(z, order):
    u = z[..., 0]
    v = 1.0 - u
    out = [(u * v) ** 2]
    if order >= 1:
        out.append((2.0 * u * v * (v - u))[..., None])
    if order >= 2:
        out.append((2.0 - 12.0 * u + 12.0 * u * u)[..., None, None])
    return out


def _product(z, minima, order):
    d = z[..., None, :] - minima  # (..., N, m)
    f = np.einsum("...kc,...kc->...k", d, d)
    N = minima.shape[0]
    value = np.prod(f, axis=-1)
    out = [value]
    if order == 0:
        return out
    # products of all factors except k (and except k, l)
    others = np.empty_like(f)
    for k in range(N):
        others[..., k] = np.prod(np.delete(f, k, axis=-1), axis=-1)
    out.append(2.0 * np.einsum("...k,...kc->...c", others, d))
    if order >= 2:
        m = minima.shape[1]
        hess = 2.0 * others.sum(axis=-1)[..., None, None] * np.eye(m)
        for k in range(N):
            for l in range(N):
                if k == l:
                    continue
                rest = [r for r in range(N) if r not in (k, l)]
                q = np.prod(f[..., rest], axis=-1) if rest else np.ones_like(value)
                hess = hess + 4.0 * q[..., None, None] * d[..., k, :, None] * d[..., l, None, :]
        out.append(hess)
    return out


def _smoothstep(r, R):
    t = np.clip((r - R) / R, 0.0, 1.0)
    inside = (r > R) & (r < 2.0 * R)
    s = t * t * (3.0 - 2.0 * t)
    ds = np.where(inside, 6.0 * t * (1.0 - t) / R, 0.0)
    dds = np.where(inside, (6.0 - 12.0 * t) / R**2, 0.0)
    return s, ds, dds


def _spliced(z, P: Potential, order):
    base = _product(z, P.minima, order)
    R, tau = P.splice.radius, P.splice.tau
    p = 2.0 + tau
    r = np.sqrt(np.einsum("...c,...c->...", z, z))
    s, ds, dds = _smoothstep(r, R)
    tail = r**p
    out = [(1.0 - s) * base[0] + s * tail]
    if order == 0:
        return out
    safe = np.where(r > 0, r, 1.0)
    rhat = z / safe[..., None]
    g_tail = p * (r**tau)[..., None] * z
    jump = tail - base[0]
    grad = (1.0 - s)[..., None] * base[1] + s[..., None] * g_tail + (ds * jump)[..., None] * rhat
    out.append(grad)
    if order >= 2:
        m = z.shape[-1]
        eye = np.eye(m)
        outer_zz = z[..., :, None] * z[..., None, :]
        h_tail = p * ((r**tau)[..., None, None] * eye + tau * (safe ** (tau - 2.0))[..., None, None] * outer_zz)
        dg = g_tail - base[1]
        rr = rhat[..., :, None] * rhat[..., None, :]
        cross = rhat[..., :, None] * dg[..., None, :] + dg[..., :, None] * rhat[..., None, :]
        hess = ((1.0 - s)[..., None, None] * base[2] + s[..., None, None] * h_tail
                + ds[..., None, None] * cross
                + jump[..., None, None] * (dds[..., None, None] * rr
                                           + (ds / safe)[..., None, None] * (eye - rr)))
        out.append(hess)
    return out


def evaluate(P: Potential, z, order: int = 2):
    """Return ``(W, grad W, hess W)`` at ``z``, truncated after ``order`` derivatives.

    ``z`` may be a single point or any stack of points with trailing axis
    ``m``; for ``m = 1`` a bare scalar or array of scalars is accepted.
    """
    pts = _as_points(P, z)
    if P.form == "scalar-double-well":
        out = _double_well(pts, order)
    elif P.form == "product-triple-well":
        out = _product(pts, P.minima, order)
    else:
        out = _spliced(pts, P, order)
    return tuple(out[: order + 1])


# ---------------------------------------------------------------------------
# sampled verification of the admissible class


@dataclass
class ConditionEntry:
    status: str  # "pass", "fail", "pending" or "info"
    detail: str
    value: object = None


@dataclass
class ConditionReport:
    entries: Dict[str, ConditionEntry] = field(default_factory=dict)
    exponents: Dict[str, float] = field(default_factory=dict)

    @property
    def all_sampled_pass(self) -> bool:
        return all(e.status == "pass" for e in self.entries.values() if e.status in ("pass", "fail"))

    def status(self, name: str) -> str:
        return self.entries[name].status


def _shell_points(rng: SplitMix64, m: int, radii: np.ndarray, per_shell: int) -> np.ndarray:
    dirs = rng.normal((len(radii), per_shell, m))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return radii[:, None, None] * dirs


def critical_exponent(n: int) -> float:
    """Upper limit (2n-1)/(n-1) on the lower growth exponent; infinite for n = 1."""
    return math.inf if n <= 1 else (2.0 * n - 1.0) / (n - 1.0)


def verify_class(P: Potential, sample_count: int, radius: float, n: int = 2, seed: int = 0) -> ConditionReport:
    """Sample the growth and well conditions of the admissible class.

    Failures are recorded as report entries.  The fast-distance condition on
    the tension matrix is marked ``pending`` because it lives with the
    tension computation; the dimension-dependent cap on ``p1`` is reported
    as ``info`` for the supplied torus dimension ``n``.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    rng = SplitMix64(seed)
    rep = ConditionReport()
    mins = P.minima

    w, g, H = evaluate(P, mins)
    worst_v, worst_g = float(np.max(np.abs(w))), float(np.max(np.linalg.norm(g, axis=-1)))
    ok = worst_v <= 1e-12 and worst_g <= 1e-12
    rep.entries["minima"] = ConditionEntry("pass" if ok else "fail",
                                           f"max |W(p_i)| = {worst_v:.3e}, max |grad W(p_i)| = {worst_g:.3e}",
                                           (worst_v, worst_g))
    lam = float(min(np.linalg.eigvalsh(H[i]).min() for i in range(P.N)))
    rep.entries["hessian_pd"] = ConditionEntry("pass" if lam > 0 else "fail",
                                               f"smallest Hessian eigenvalue at the wells = {lam:.6g}", lam)

    # positivity away from the wells, inside the sampling ball
    pts = rng.uniform((sample_count, P.m), -radius, radius)
    near = np.min(np.linalg.norm(pts[:, None, :] - mins[None], axis=-1), axis=1) < 1e-6
    vals = evaluate(P, pts, order=0)[0]
    bad = int(np.count_nonzero((vals <= 0) & ~near))
    rep.entries["positivity"] = ConditionEntry("pass" if bad == 0 else "fail",
                                               f"{bad} of {sample_count} samples with W <= 0", bad)

    # (W1), (W2): constants fitted on a ball that also covers any blending
    # zone (|z| <= R), then validated on the shells four times further out
    p = P.growth.p2
    per_shell = max(8, sample_count // 16)
    fit = max(float(radius), P.growth.R)
    inner = _shell_points(rng, P.m, np.linspace(fit / 16, fit, 16), per_shell).reshape(-1, P.m)
    outer = _shell_points(rng, P.m, np.linspace(fit, 4 * fit, 16), per_shell).reshape(-1, P.m)
    for name, order, expo in (("W1", 1, p - 1.0), ("W2", 2, p - 2.0)):
        ratios = []
        for batch in (inner, outer):
            d = evaluate(P, batch, order=order)[order]
            mag = np.linalg.norm(d.reshape(len(batch), -1), axis=-1) if order == 1 else \
                np.linalg.norm(d, ord=2, axis=(-2, -1))
            rn = np.linalg.norm(batch, axis=-1)
            ratios.append(mag / (1.0 + rn**expo))
        k_fit, k_out = float(ratios[0].max()), float(ratios[1].max())
        ok = np.isfinite(k_out) and k_out <= 1.5 * max(k_fit, 1e-300)
        rep.entries[name] = ConditionEntry("pass" if ok else "fail",
                                           f"k fitted {k_fit:.4g} on |z|<={fit:g}, worst {k_out:.4g} out to {4 * fit:g}",
                                           (k_fit, k_out))

    # (W3): fit exponents from the extreme values on shells beyond R
    G = P.growth
    radii = G.R * np.geomspace(1.0, 8.0, 12)
    shells = _shell_points(rng, P.m, radii, per_shell)
    if P.m == 1:
        shells = np.concatenate([shells, -shells], axis=1)
    wv = evaluate(P, shells, order=0)[0]
    lo, hi = wv.min(axis=1), wv.max(axis=1)
    fit_lo = float(np.polyfit(np.log(radii), np.log(lo), 1)[0])
    fit_hi = float(np.polyfit(np.log(radii), np.log(hi), 1)[0])
    rep.exponents = {"p1_fit": fit_lo, "p2_fit": fit_hi, "p1": G.p1, "p2": G.p2}
    rn = np.linalg.norm(shells, axis=-1)
    bounds_ok = bool(np.all(G.k3 * rn**G.p1 < wv) and np.all(wv < G.k4 * rn**G.p2))
    window_ok = 2.0 < G.p1 <= G.p2 <= 2.0 * (G.p1 - 1.0)
    rep.entries["W3"] = ConditionEntry(
        "pass" if bounds_ok and window_ok else "fail",
        f"fitted exponents ({fit_lo:.3f}, {fit_hi:.3f}); stored p1={G.p1:g}, p2={G.p2:g}, "
        f"bounds {'hold' if bounds_ok else 'violated'}, window 2<p1<=p2<=2(p1-1) {'holds' if window_ok else 'violated'}",
        (fit_lo, fit_hi))
    cap = critical_exponent(n)
    rep.entries["W3_subcritical"] = ConditionEntry(
        "info", f"p1 = {G.p1:g} {'<' if G.p1 < cap else '>='} (2n-1)/(n-1) = {cap:g} for n = {n}", G.p1 < cap)
    rep.entries["W0"] = ConditionEntry("pending", "strict triangle inequality is checked on the tension matrix")
    return rep


# ---------------------------------------------------------------------------
# text serialization


def to_text(P: Potential) -> str:
    lines = [f"form = {P.form}", f"m = {P.m}", f"N = {P.N}",
             "minima = " + ", ".join(repr(float(x)) for x in P.minima.reshape(-1))]
    if P.splice is not None:
        lines += [f"splice_radius = {P.splice.radius!r}", f"splice_tau = {P.splice.tau!r}"]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Potential:
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    for key in ("form", "m", "N", "minima"):
        if key not in kv:
            raise ValueError(f"potential text is missing key {key!r}")
    form, m, N = kv["form"], int(kv["m"]), int(kv["N"])
    minima = np.array([float(x) for x in kv["minima"].replace(",", " ").split()]).reshape(N, m)
    if form == "scalar-double-well":
        P = build_double_well()
        if not np.array_equal(minima, P.minima):
            P = Potential(m=1, N=2, minima=minima, form=form, growth=P.growth)
        return P
    if form == "product-triple-well":
        return build_product_triple_well(minima[0], minima[1])
    if form == "spliced":
        return build_product_triple_well(minima[0], minima[1], splice=True,
                                         splice_radius=float(kv["splice_radius"]),
                                         splice_tau=float(kv["splice_tau"]))
    raise ValueError(f"unknown potential form {form!r}")


def load(path) -> Potential:
    with open(path, "r", encoding="utf-8") as fh:
        return from_text(fh.read())


def save(P: Potential, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(P))
