"""Experiment configuration: flat INI files with one level of sections.

A config names an experiment and carries the potential, grid, metric and
run parameters::

    [experiment]
    name = gamma-sweep

    [potential]
    form = double-well

    [grid]
    shape = 4096
    lengths = 1

    [run]
    eps = 0.04, 0.02, 0.01
    cluster = droplet:0.3
    seed = 0

Lists are comma separated.  Validation names the offending key in a
``ConfigError``.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Tuple

from ..errors import ConfigError

EXPERIMENTS = ("tension", "minimize", "hunt", "degeneracy-scan", "isoperimetric", "gamma-sweep", "homotopy",
               "recover")

# run-section keys each experiment cannot do without
REQUIRED = {
    "tension": (),
    "minimize": ("eps", "volume"),
    "hunt": ("eps", "volume"),
    "degeneracy-scan": ("volume",),
    "isoperimetric": ("volume",),
    "gamma-sweep": ("eps", "cluster"),
    "homotopy": ("eps", "volume"),
    "recover": ("eps", "cluster"),
}

# experiments that need a grid section
NEEDS_GRID = {"minimize", "hunt", "degeneracy-scan", "isoperimetric", "gamma-sweep", "homotopy", "recover"}


@dataclass
class ExperimentConfig:
    name: str
    potential: Dict[str, str]
    shape: Tuple[int, ...]
    lengths: Tuple[float, ...]
    rho: str = "1"
    eps: List[float] = field(default_factory=list)
    volume: List[float] = field(default_factory=list)
    seed: int = 0
    tol: float = 1e-8
    run: Dict[str, str] = field(default_factory=dict)
    output: Dict[str, str] = field(default_factory=dict)
    source: Optional[str] = None

    def option(self, key: str, default=None):
        return self.run.get(key, default)

    def float_option(self, key: str, default: float) -> float:
        raw = self.run.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None

    def int_option(self, key: str, default: int) -> int:
        raw = self.run.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None

    def bool_option(self, key: str, default: bool) -> bool:
        raw = self.run.get(key)
        if raw is None:
            return default
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")

    def items(self) -> List[Tuple[str, str, str]]:
        """Every setting as (section, key, value), in a fixed order, for report headers."""
        out = [("experiment", "name", self.name)]
        out += [("potential", k, v) for k, v in sorted(self.potential.items())]
        out += [("grid", "shape", ",".join(str(s) for s in self.shape)),
                ("grid", "lengths", ",".join(repr(L) for L in self.lengths)),
                ("metric", "rho", self.rho)]
        if self.eps:
            out.append(("run", "eps", ",".join(repr(e) for e in self.eps)))
        if self.volume:
            out.append(("run", "volume", ",".join(repr(v) for v in self.volume)))
        out += [("run", "seed", str(self.seed)),
                ("run", "tol", repr(self.tol))]
        skip = {"eps", "volume", "seed", "tol"}
        out += [("run", k, v) for k, v in sorted(self.run.items()) if k not in skip]
        out += [("output", k, v) for k, v in sorted(self.output.items())]
        return out


def parse_floats(raw: str, key: str) -> List[float]:
    parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {raw!r}") from None
    if not vals:
        raise ConfigError(key, "list is empty")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(key, "values must be finite")
    return vals


def _parse_shape(raw: str) -> Tuple[int, ...]:
    parts = [p for p in raw.replace("x", ",").replace("×", ",").split(",") if p.strip()]
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError("shape", f"expected integers, got {raw!r}") from None
    if not shape or any(s < 2 for s in shape):
        raise ConfigError("shape", "every grid extent must be at least 2")
    return shape


def _reader(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("syntax", str(exc).splitlines()[0]) from None
    return cp


def parse_config(text: str, source: Optional[str] = None, overrides: Optional[Dict[str, str]] = None,
                 name: Optional[str] = None) -> ExperimentConfig:
    """Validate INI text (plus ``section.key`` or bare run-key overrides) into a config."""
    cp = _reader(text)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        section, _, opt = key.rpartition(".")
        section = section or "run"
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, opt, str(val))
    if name is not None:
        if not cp.has_section("experiment"):
            cp.add_section("experiment")
        cp.set("experiment", "name", name)
    exp_name = cp.get("experiment", "name", fallback=None)
    if exp_name is None:
        raise ConfigError("name", "missing [experiment] name")
    exp_name = exp_name.strip()
    if exp_name not in EXPERIMENTS:
        raise ConfigError("name", f"unknown experiment {exp_name!r}; choose from {', '.join(EXPERIMENTS)}")
    potential = dict(cp.items("potential")) if cp.has_section("potential") else {"form": "double-well"}
    potential.setdefault("form", "double-well")
    if "file" in potential and not os.path.exists(potential["file"]):
        raise ConfigError("file", f"potential file {potential['file']!r} does not exist")

    if cp.has_option("grid", "shape"):
        shape = _parse_shape(cp.get("grid", "shape"))
    elif exp_name in NEEDS_GRID:
        raise ConfigError("shape", "missing [grid] shape")
    else:
        shape = (2,)
    if cp.has_option("grid", "lengths"):
        lengths = tuple(parse_floats(cp.get("grid", "lengths"), "lengths"))
    else:
        lengths = (1.0,) * len(shape)
    if len(lengths) == 1 and len(shape) > 1:
        lengths = lengths * len(shape)
    if len(lengths) != len(shape):
        raise ConfigError("lengths", "needs one length per grid axis")
    if any(L <= 0 for L in lengths):
        raise ConfigError("lengths", "lengths must be positive")
    rho = cp.get("metric", "rho", fallback="1").strip()

    run = dict(cp.items("run")) if cp.has_section("run") else {}
    for key in REQUIRED[exp_name]:
        if key not in run or not run[key].strip():
            raise ConfigError(key, f"missing required key {key!r} in [run] for experiment {exp_name!r}")
    eps = parse_floats(run["eps"], "eps") if "eps" in run else []
    if any(e <= 0 for e in eps):
        raise ConfigError("eps", "values must be positive")
    if exp_name == "gamma-sweep" and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps", "the eps ladder must be strictly decreasing")
    volume = parse_floats(run["volume"], "volume") if "volume" in run else []
    try:
        seed = int(run.get("seed", "0"))
    except ValueError:
        raise ConfigError("seed", f"expected an integer, got {run['seed']!r}") from None
    if seed < 0:
        raise ConfigError("seed", "seed must be nonnegative")
    try:
        tol = float(run.get("tol", "1e-8"))
    except ValueError:
        raise ConfigError("tol", f"expected a number, got {run['tol']!r}") from None
    cluster = run.get("cluster", "")
    if cluster and ":" not in cluster and not os.path.exists(cluster):
        raise ConfigError("cluster", f"cluster file {cluster!r} does not exist")
    output = dict(cp.items("output")) if cp.has_section("output") else {}
    return ExperimentConfig(name=exp_name, potential=potential, shape=shape, lengths=lengths, rho=rho, eps=eps,
                            volume=volume, seed=seed, tol=tol, run=run, output=output, source=source)


def load_config(path, overrides: Optional[Dict[str, str]] = None, name: Optional[str] = None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError("config", f"file {path!r} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path), overrides=overrides, name=name)


def recipe_names() -> List[str]:
    folder = resources.files("achlab.experiments").joinpath("recipes")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def recipe_text(name: str) -> str:
    folder = resources.files("achlab.experiments").joinpath("recipes")
    path = folder.joinpath(f"{name}.ini")
    if not path.is_file():
        raise ConfigError("recipe", f"unknown recipe {name!r}; available: {', '.join(recipe_names())}")
    return path.read_text(encoding="utf-8")


def load_recipe(name: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    return parse_config(recipe_text(name), source=f"recipe:{name}", overrides=overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to an equivalent config."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for section, key, val in cfg.items():
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, val)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
