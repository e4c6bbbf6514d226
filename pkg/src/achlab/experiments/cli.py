"""``achlab`` command line: one subcommand per experiment.

Each subcommand reads an optional ``--config`` file or a packaged
``--recipe``, applies flag overrides, runs, and writes the CSV report to
``--out`` (stdout otherwise).  Check lines go to stderr.  The exit status
is 0 when every hard check passed, 1 when one failed and 2 on errors.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Optional

from .. import DESIGN_REVISION, __version__
from ..errors import AchlabError, ConfigError
from .config import EXPERIMENTS, load_config, parse_config, recipe_names, recipe_text
from .run import run

# flag -> (config key, help)
COMMON = {
    "eps": ("run.eps", "eps value or comma-separated ladder"),
    "volume": ("run.volume", "volume vector v1,v2,..."),
    "grid": ("grid.shape", "grid shape, e.g. 128x128"),
    "lengths": ("grid.lengths", "torus lengths L1,L2,..."),
    "rho": ("metric.rho", "conformal factor: 1 | bump:A,x0 | wave:A,x0"),
    "seed": ("run.seed", "64-bit seed"),
    "tol": ("run.tol", "solver tolerance"),
    "potential": ("potential.file", "potential file (text format)"),
    "nodes": ("run.nodes", "polyline nodes K for surface tensions"),
}

EXTRA = {
    "tension": {},
    "minimize": {"seed-field": ("run.seed_field", "initial field: photo | constant | noise")},
    "hunt": {"seeds": ("run.seeds", "number of photograph seeds")},
    "degeneracy-scan": {"modes": ("run.modes", "largest |n_k| of the Fourier modes")},
    "isoperimetric": {"omega": ("run.omega", "tension matrix: unit | potential | path to csv"),
                      "dt": ("run.dt", "threshold dynamics time step")},
    "gamma-sweep": {"cluster": ("run.cluster", "cluster snapshot or shape such as droplet:0.3"),
                    "tau": ("run.tau", "auto | value")},
    "homotopy": {"samples": ("run.samples", "sample lattice k or kxk"),
                 "threshold": ("run.threshold", "pass threshold on the distance")},
    "recover": {"cluster": ("run.cluster", "cluster snapshot or shape such as disk:0.1"),
                "tau": ("run.tau", "auto | value")},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="achlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"achlab {__version__} (artifact {__version__}, design revision {DESIGN_REVISION})")
    parser.add_argument("--list-recipes", action="store_true", help="print the packaged recipe names and exit")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="INI configuration file")
        src.add_argument("--recipe", help="packaged recipe name")
        p.add_argument("--out", help="CSV report path (default: stdout)")
        if name in ("isoperimetric",):
            p.add_argument("--volumes", dest="volume", help="interior volumes v1,v2,...")
        for flag, (key, text) in {**COMMON, **EXTRA[name]}.items():
            if flag == "volume" and name == "isoperimetric":
                continue
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), help=text)
    return parser


def _overrides(name: str, args: argparse.Namespace) -> Dict[str, str]:
    out = {}
    for flag, (key, _) in {**COMMON, **EXTRA[name]}.items():
        val = getattr(args, flag.replace("-", "_"), None)
        if val is not None:
            out[key] = val
    if args.out:
        out["output.csv"] = args.out
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_recipes:
        print("\n".join(recipe_names()))
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    name = args.command
    try:
        overrides = _overrides(name, args)
        if args.config:
            cfg = load_config(args.config, overrides, name=name)
        elif args.recipe:
            text = recipe_text(args.recipe)
            cfg = parse_config(text, source=f"recipe:{args.recipe}", overrides=overrides)
            if cfg.name != name:
                raise ConfigError("recipe", f"recipe {args.recipe!r} runs {cfg.name!r}, not {name!r}")
        else:
            cfg = parse_config("", overrides=overrides, name=name)
        bundle = run(cfg)
    except AchlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.out:
        sys.stdout.write(bundle.csv_text())
    for check in bundle.checks:
        print(check.line(), file=sys.stderr)
    return bundle.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
