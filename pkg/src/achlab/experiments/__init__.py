"""Configuration, packaged recipes, experiment drivers and the command line."""

from .config import ExperimentConfig, load_config, load_recipe, parse_config, recipe_names
from .run import Check, ReportBundle, run

__all__ = ["Check", "ExperimentConfig", "ReportBundle", "load_config", "load_recipe", "parse_config",
           "recipe_names", "run"]
