"""Experiment drivers and report bundles.

``run(config)`` dispatches on the experiment name, evaluates the pipeline,
and returns a ``ReportBundle``: a CSV table whose comment header records
the full configuration, the seed and the headline results, plus a list of
checks.  Hard checks decide the exit code; soft checks are logged only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .. import __version__
from .. import potential as potential_mod
from ..cluster.core import (Cluster, interior_diameter, isoperimetric_bounds, isotropic_interface_measure,
                            isotropic_multi_perimeter, multi_perimeter, volumes)
from ..cluster.io import load_cluster, save_cluster
from ..cluster.mbo import MBOOptions, mbo_run
from ..errors import ConfigError, NonConvergence
from ..field.energy import energy, project_volume, volume
from ..field.flow import CriticalPoint, FlowOptions, HuntOptions, constrained_flow, hunt
from ..field.grid import ConformalMetric, Field, TorusGrid
from ..field.io import save_field
from ..field.spectral import degeneracy_scan, nondegeneracy_check
from ..photography import (canonical_cluster, digital_ball, homotopy_check, photo, sample_lattice)
from ..potential import Potential
from ..recovery import chamber_weights, gamma_sweep, recover, resolve_tau
from ..rng import SplitMix64
from ..tension import OptimizeOptions, TensionMatrix, tension_matrix
from .config import ExperimentConfig, parse_floats


def format_value(x) -> str:
    """Report formatting: integers verbatim, floats with 17 significant digits (exact round trip)."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "{:.16e}".format(x)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    hard: bool = True

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        kind = "" if self.hard else " (soft)"
        return f"{tag}{kind} {self.name}: {self.detail}"


@dataclass
class ReportBundle:
    config: ExperimentConfig
    columns: List[str]
    rows: List[list]
    results: Dict[str, object] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if all(c.passed for c in self.checks if c.hard) else 1

    def header_lines(self) -> List[str]:
        lines = [f"# achlab {__version__} experiment={self.config.name}", f"# seed = {self.config.seed}"]
        lines += [f"# config [{s}] {k} = {v}" for s, k, v in self.config.items()]
        for key, val in self.results.items():
            if isinstance(val, (list, tuple, np.ndarray)):
                val = ",".join(format_value(v) for v in val)
            else:
                val = format_value(val)
            lines.append(f"# result {key} = {val}")
        lines += [f"# check {c.line()}" for c in self.checks]
        return lines

    def csv_text(self) -> str:
        out = self.header_lines()
        out.append(",".join(self.columns))
        out += [",".join(format_value(v) for v in row) for row in self.rows]
        return "\n".join(out) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.csv_text())


# ---------------------------------------------------------------------------
# building blocks from the config


def build_potential(cfg: ExperimentConfig) -> Potential:
    spec = cfg.potential
    if "file" in spec:
        return potential_mod.load(spec["file"])
    form = spec.get("form", "double-well").strip()
    if form == "double-well":
        return potential_mod.build_double_well()
    if form in ("triple-well", "product-triple-well"):
        p1 = parse_floats(spec.get("p1", "1,0"), "p1")
        p2 = parse_floats(spec.get("p2", "0,1"), "p2")
        splice = spec.get("splice", "false").strip().lower() in ("1", "true", "yes", "on")
        radius = float(spec["splice_radius"]) if "splice_radius" in spec else None
        tau = float(spec.get("splice_tau", "0.5"))
        return potential_mod.build_product_triple_well(p1, p2, splice=splice, splice_radius=radius,
                                                       splice_tau=tau)
    raise ConfigError("form", f"unknown potential form {form!r}")


def build_metric(cfg: ExperimentConfig) -> ConformalMetric:
    grid = TorusGrid(cfg.shape, cfg.lengths)
    try:
        return ConformalMetric.from_expression(grid, cfg.rho)
    except ValueError as exc:
        raise ConfigError("rho", str(exc)) from None


def build_tension(cfg: ExperimentConfig, P: Potential) -> TensionMatrix:
    K = cfg.int_option("nodes", 256)
    return tension_matrix(P, K, OptimizeOptions(seed=cfg.seed))


def build_cluster(spec: str, grid: TorusGrid, N: int) -> Cluster:
    """Cluster from ``droplet:v``, ``disk:v``, ``bands:w[,w2]``, ``double-bubble:v1,v2`` or a snapshot path."""
    kind, sep, args = spec.partition(":")
    if not sep:
        c = load_cluster(spec)
        if c.grid.shape != grid.shape or not np.allclose(c.grid.lengths, grid.lengths):
            raise ConfigError("cluster", "cluster snapshot grid differs from the [grid] section")
        return c
    vals = parse_floats(args, "cluster")
    centre = [L / 2.0 for L in grid.lengths]
    if kind in ("droplet", "disk", "ball"):
        if N != 2:
            raise ConfigError("cluster", f"{kind} clusters need two wells")
        return Cluster(grid, np.where(digital_ball(grid, centre, vals[0]), 1, 2), 2)
    if kind == "bands":
        if len(vals) != N - 1:
            raise ConfigError("cluster", f"bands need {N - 1} widths")
        x = grid.coordinates()[0]
        labels = np.full(grid.shape, N, dtype=np.int64)
        start = grid.lengths[0] / 2.0 - sum(vals) / 2.0
        for i, w in enumerate(vals, start=1):
            labels[(x >= start) & (x < start + w)] = i
            start += w
        return Cluster(grid, labels, N)
    if kind in ("double-bubble", "tangent-balls"):
        if N != 3:
            raise ConfigError("cluster", f"{kind} clusters need three wells")
        return canonical_cluster(grid, centre, vals, 3, kind).cluster
    raise ConfigError("cluster", f"unknown cluster shape {kind!r}")


def _field_volume(cfg: ExperimentConfig, P: Potential) -> np.ndarray:
    v = np.asarray(cfg.volume, dtype=float)
    if v.size != P.m:
        raise ConfigError("volume", f"expected {P.m} field volume component(s), got {v.size}")
    return v


def _volume_ok(got, target) -> bool:
    got = np.asarray(got, dtype=float)
    target = np.asarray(target, dtype=float)
    return bool(np.all(np.abs(got - target) <= 1e-10 * (1.0 + np.abs(target))))


def _seed_field(kind: str, cfg: ExperimentConfig, P: Potential, T: Optional[TensionMatrix], g: ConformalMetric,
                eps: float, v: np.ndarray) -> Field:
    grid = g.grid
    if kind == "constant":
        return project_volume(Field.constant(grid, np.zeros(P.m)), v, g)
    if kind == "noise":
        amp = cfg.float_option("noise", 0.1)
        noise = SplitMix64(cfg.seed).uniform(P.m * grid.size, -amp, amp).reshape((P.m,) + grid.shape)
        return project_volume(Field(grid, noise), v, g)
    if kind == "photo":
        w = chamber_weights(v, P)
        centre = [L / 2.0 for L in grid.lengths]
        return photo(centre, w, eps, P, T, g)
    raise ConfigError("seed_field", f"unknown seed field {kind!r}")


# ---------------------------------------------------------------------------
# experiments


def _tension(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    T = build_tension(cfg, P)
    om = T.omega
    rows = []
    for i in range(P.N):
        for j in range(i + 1, P.N):
            others = [om[i, l] + om[l, j] - om[i, j] for l in range(P.N) if l not in (i, j)]
            margin = min(others) if others else math.inf
            rows.append([i + 1, j + 1, om[i, j], margin, T.iterations.get((i, j), 0)])
    worst = min((r[3] for r in rows), default=math.inf)
    checks = [Check("triangle inequality within 1e-6", worst >= -1e-6, f"worst margin {format_value(worst)}"),
              Check("immiscible", T.immiscible, f"margin {format_value(T.margin)}", hard=False)]
    return ReportBundle(cfg, ["i", "j", "omega", "margin_to_triangle", "iterations"], rows,
                        {"immiscible": T.immiscible, "margin": T.margin}, checks)


def _minimize(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    v = _field_volume(cfg, P)
    kind = cfg.option("seed_field", "photo")
    T = build_tension(cfg, P) if kind == "photo" else None
    opts = FlowOptions(tol=cfg.tol, max_iter=cfg.int_option("max_iter", 200_000))
    rows, checks = [], []
    results: Dict[str, object] = {}
    bundle_artifacts = {}
    for eps in cfg.eps:
        u0 = _seed_field(kind, cfg, P, T, g, eps, v)
        try:
            cp = constrained_flow(u0, eps, v, P, g, opts)
        except NonConvergence as exc:
            cp = exc.partial
        row = [eps, cp.energy, cp.residual_norm, cp.iterations] + list(cp.lam) + list(cp.volume)
        if cfg.bool_option("nondegeneracy", False):
            nd = nondegeneracy_check(cp, P, g)
            row += [nd.nondegenerate, nd.sigma_min]
        rows.append(row)
        checks.append(Check(f"eps={eps:g} converged", cp.residual_norm <= cfg.tol,
                            f"residual {format_value(cp.residual_norm)}"))
        checks.append(Check(f"eps={eps:g} volume exact", _volume_ok(cp.volume, v),
                            f"error {format_value(float(np.max(np.abs(cp.volume - v))))}"))
        if "field" in cfg.output:
            path = cfg.output["field"] if len(cfg.eps) == 1 else f"{cfg.output['field']}.{len(rows)}"
            save_field(cp.u, path)
            bundle_artifacts[f"field_{len(rows)}"] = path
    cols = ["eps", "energy", "residual_norm", "iterations"]
    cols += [f"lambda_{k + 1}" for k in range(P.m)] + [f"volume_{k + 1}" for k in range(P.m)]
    if cfg.bool_option("nondegeneracy", False):
        cols += ["nondegenerate", "sigma_min"]
    return ReportBundle(cfg, cols, rows, results, checks, bundle_artifacts)


def hunt_seed_points(grid: TorusGrid, count: int, seed: int) -> List[np.ndarray]:
    """``count`` torus points drawn from the counter-based stream of ``seed``."""
    u = SplitMix64(seed).uniform(count * grid.n).reshape(count, grid.n)
    return [row * np.asarray(grid.lengths) for row in u]


def _hunt(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    T = build_tension(cfg, P)
    v = _field_volume(cfg, P)
    eps = cfg.eps[0]
    count = cfg.int_option("seeds", 32)
    points = hunt_seed_points(g.grid, count, cfg.seed)
    w = chamber_weights(v, P)
    seeds = [photo(x, w, eps, P, T, g) for x in points]
    dedup = cfg.option("dedup_tol")
    opts = HuntOptions(flow=FlowOptions(tol=cfg.tol, max_iter=cfg.int_option("max_iter", 200_000)),
                       dedup_tol=float(dedup) if dedup is not None else None)
    rep = hunt(P, g, eps, v, seeds, opts)
    rows = []
    for idx, cp in enumerate(rep.points):
        mapped = sum(1 for o in rep.seed_to_point if o == idx)
        err = float(np.max(np.abs(cp.volume - v)))
        rows.append([idx + 1, cp.energy, cp.residual_norm, err, mapped] + list(cp.lam))
    cat = g.grid.n + 1  # Lusternik-Schnirelmann category of the n-torus
    prediction = cat + 1
    checks = [
        Check("all residuals within tol", all(cp.residual_norm <= cfg.tol for cp in rep.points),
              f"max {format_value(max((cp.residual_norm for cp in rep.points), default=0.0))}"),
        Check("all volumes exact", all(_volume_ok(cp.volume, v) for cp in rep.points), "tolerance 1e-10"),
        Check("at least one critical point", rep.eta >= 1, f"eta {rep.eta}"),
        Check("eta reaches cat+1", rep.eta >= prediction, f"eta {rep.eta} vs {prediction}", hard=False),
    ]
    cols = ["index", "energy", "residual_norm", "volume_error", "seeds"] + [f"lambda_{k + 1}" for k in range(P.m)]
    return ReportBundle(cfg, cols, rows, {"eta": rep.eta, "dropped": rep.dropped, "prediction": prediction},
                        checks)


def _degeneracy(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    if not g.flat:
        raise ConfigError("rho", "the degeneracy scan needs a flat metric")
    v = _field_volume(cfg, P)
    lo = cfg.float_option("eps_min", 0.0)
    hi = cfg.float_option("eps_max", math.inf)
    found = degeneracy_scan(P, v, g, (lo, hi), cfg.int_option("modes", 3))
    rows = [[i + 1, e] for i, e in enumerate(found)]
    checks = []
    results: Dict[str, object] = {"count": len(found)}
    if "expect" in cfg.run:
        for e in parse_floats(cfg.run["expect"], "expect"):
            near = min((abs(f - e) for f in found), default=math.inf)
            checks.append(Check(f"contains {e:.12g}", near <= 1e-6, f"nearest offset {format_value(near)}"))
    if cfg.bool_option("check_sigma", False) and found:
        eps = found[0]
        c = Field.constant(g.grid, v / g.volume)
        cp = CriticalPoint(u=c, epsilon=eps, lam=np.zeros(P.m), energy=energy(c, eps, P, g), residual_norm=0.0,
                           volume=volume(c, g))
        nd = nondegeneracy_check(cp, P, g)
        results["sigma_min"] = nd.sigma_min
        checks.append(Check("sigma_min at the largest eps", nd.sigma_min <= 1e-3 / eps,
                            f"{format_value(nd.sigma_min)} vs {format_value(1e-3 / eps)}"))
    return ReportBundle(cfg, ["index", "eps"], rows, results, checks)


def _omega_from_config(cfg: ExperimentConfig, N: int) -> np.ndarray:
    spec = cfg.option("omega", "unit").strip()
    if spec == "unit":
        return np.ones((N, N)) - np.eye(N)
    if spec == "potential":
        P = build_potential(cfg)
        if P.N != N:
            raise ConfigError("omega", "potential has a different number of wells")
        return build_tension(cfg, P).omega
    try:
        om = np.loadtxt(spec, delimiter=",", ndmin=2)
    except OSError:
        raise ConfigError("omega", f"cannot read tension matrix {spec!r}") from None
    if om.shape != (N, N):
        raise ConfigError("omega", f"expected a {N}x{N} matrix")
    return om


def _isoperimetric(cfg: ExperimentConfig) -> ReportBundle:
    g = build_metric(cfg)
    v = np.asarray(cfg.volume, dtype=float)
    N = v.size + 1
    om = _omega_from_config(cfg, N)
    dt = cfg.option("dt")
    opts = MBOOptions(dt=float(dt) if dt is not None else None, max_sweeps=cfg.int_option("max_sweeps", 400))
    run = mbo_run(v, om, g, opts)
    c = run.cluster
    vols = volumes(c, g)[:-1]
    iso = isotropic_multi_perimeter(c, om, g)
    face = multi_perimeter(c, om, g)
    bounds = isoperimetric_bounds(v, om, g.grid.n)
    rows = [[h["sweep"], h["changes"], h["perimeter"]] for h in run.history]
    results: Dict[str, object] = {"sweeps": run.sweeps, "best_sweep": run.best_sweep, "volumes": vols,
                                  "isotropic_multi_perimeter": iso, "face_multi_perimeter": face,
                                  "initial_perimeter": run.initial_perimeter, "bound_lower": bounds.lower,
                                  "bound_upper": bounds.upper}
    cell = g.grid.cell_volume * float(np.max(g.b))
    checks = [Check("converged", run.converged, f"{run.sweeps} sweeps"),
              Check("volumes within one cell", bool(np.all(np.abs(vols - v) <= cell)),
                    f"max error {format_value(float(np.max(np.abs(vols - v))))}")]
    if N == 2 and g.flat and g.grid.n == 2:
        H = isotropic_interface_measure(c, g)[0, 1]
        ref = 2.0 * math.sqrt(math.pi * v[0])
        rel = abs(H - ref) / ref
        results["disk_reference"] = ref
        results["interface_isotropic"] = H
        limit = cfg.float_option("expect_rel", math.nan)
        checks.append(Check("disk reference", rel <= (limit if not math.isnan(limit) else 0.03),
                            f"relative error {format_value(rel)}", hard=not math.isnan(limit)))
    if "cluster" in cfg.output:
        save_cluster(c, cfg.output["cluster"])
    return ReportBundle(cfg, ["sweep", "changes", "perimeter"], rows, results, checks)


def _tau_rule(cfg: ExperimentConfig):
    raw = cfg.option("tau", "auto").strip()
    return "sqrt" if raw == "auto" else raw


def _gamma(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    T = build_tension(cfg, P)
    c = build_cluster(cfg.run["cluster"], g.grid, P.N)
    v = _field_volume(cfg, P) if cfg.volume else None
    K = cfg.int_option("profile_nodes", 1024)
    sweep = gamma_sweep(c, P, T, g, cfg.eps, _tau_rule(cfg), v, K)
    rows = [[r["eps"], r["tau"], r["energy"], r["perimeter"], r["gap"]] for r in sweep.rows]
    # field volumes are bounded by the torus volume times the largest well
    scale = 1.0 + (float(np.max(np.abs(v))) if v is not None else g.volume * float(np.max(np.abs(P.minima))))
    worst = max(r["volume_error"] for r in sweep.rows)
    checks = [Check("volumes exact", worst <= 1e-12 * scale, f"max error {format_value(worst)}"),
              Check("gap decreasing", sweep.gaps_decreasing, ", ".join(format_value(x) for x in sweep.gaps))]
    last = sweep.rows[-1]
    rel = abs(last["gap"]) / last["perimeter"] if last["perimeter"] else math.inf
    limit = cfg.float_option("expect_rel", math.nan)
    if not math.isnan(limit):
        checks.append(Check(f"relative gap at eps={last['eps']:g}", rel <= limit,
                            f"{format_value(rel)} vs {format_value(limit)}"))
    return ReportBundle(cfg, ["eps", "tau", "energy", "perimeter", "gap"], rows,
                        {"relative_gap": rel, "gaps_decreasing": sweep.gaps_decreasing}, checks)


def _homotopy(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    T = build_tension(cfg, P)
    w = np.asarray(cfg.volume, dtype=float)
    eps = cfg.eps[0]
    raw = cfg.option("samples", "4").lower().replace("×", "x")
    try:
        k = int(raw.split("x")[0])
    except ValueError:
        raise ConfigError("samples", f"expected k or kxk, got {raw!r}") from None
    sample = sample_lattice(g.grid, k)
    shape = canonical_cluster(g.grid, sample[0], w, P.N)
    h = max(g.grid.spacing)
    default_threshold = 3.0 * h + 0.1 * 2.0 * shape.extent
    threshold = cfg.float_option("threshold", default_threshold)
    rep = homotopy_check(w, eps, P, T, g, sample, tau=resolve_tau(eps, _tau_rule(cfg)))
    n = g.grid.n
    rows = []
    for r in rep.rows:
        proj = list(r["projected"]) if r["projected"] is not None else [None] * n
        rows.append(list(r["x"]) + proj + [r["distance"]])
    checks = [Check("projection defined everywhere", rep.undefined == 0, f"{rep.undefined} undefined"),
              Check("max distance below threshold", rep.max_dist < threshold,
                    f"{format_value(rep.max_dist)} vs {format_value(threshold)}")]
    cols = [f"x_{i + 1}" for i in range(n)] + [f"projected_{i + 1}" for i in range(n)] + ["distance"]
    return ReportBundle(cfg, cols, rows, {"max_dist": rep.max_dist, "threshold": threshold}, checks)


def _recover(cfg: ExperimentConfig) -> ReportBundle:
    P = build_potential(cfg)
    g = build_metric(cfg)
    T = build_tension(cfg, P)
    c = build_cluster(cfg.run["cluster"], g.grid, P.N)
    v = _field_volume(cfg, P) if cfg.volume else None
    K = cfg.int_option("profile_nodes", 1024)
    rule = _tau_rule(cfg)
    per = multi_perimeter(c, T, g)
    rows, checks = [], []
    artifacts = {}
    for eps in cfg.eps:
        tau = resolve_tau(eps, rule)
        res = recover(c, P, T, eps, tau, g, v, K)
        E = energy(res.u, eps, P, g)
        err = float(np.max(np.abs(res.volume_error)))
        target = volume(res.u, g) - res.volume_error
        rows.append([eps, tau, E, per, err, res.patched] + list(res.zeta))
        checks.append(Check(f"eps={eps:g} volume exact",
                            bool(np.all(np.abs(res.volume_error) <= 1e-12 * (1.0 + np.abs(target)))),
                            f"error {format_value(err)}"))
        if "field" in cfg.output:
            path = cfg.output["field"] if len(cfg.eps) == 1 else f"{cfg.output['field']}.{len(rows)}"
            save_field(res.u, path)
            artifacts[f"field_{len(rows)}"] = path
    cols = ["eps", "tau", "energy", "perimeter", "volume_error", "patched"]
    cols += [f"zeta_{i + 1}" for i in range(P.N - 1)]
    return ReportBundle(cfg, cols, rows, {"diameter": interior_diameter(c)}, checks, artifacts)


DISPATCH: Dict[str, Callable[[ExperimentConfig], ReportBundle]] = {
    "tension": _tension,
    "minimize": _minimize,
    "hunt": _hunt,
    "degeneracy-scan": _degeneracy,
    "isoperimetric": _isoperimetric,
    "gamma-sweep": _gamma,
    "homotopy": _homotopy,
    "recover": _recover,
}


def run(cfg: ExperimentConfig, quiet_warnings: bool = True) -> ReportBundle:
    """Run one experiment; writes the CSV to ``[output] csv`` when configured."""
    with warnings.catch_warnings():
        if quiet_warnings:
            warnings.simplefilter("ignore", UserWarning)
        bundle = DISPATCH[cfg.name](cfg)
    if "csv" in cfg.output:
        bundle.write(cfg.output["csv"])
        bundle.artifacts["csv"] = cfg.output["csv"]
    return bundle
