"""Periodic-grid fields, the constrained energy and its critical points."""

from .energy import (b_inner, b_mean, b_norm, energy, energy_gradient, linearized_apply, project_volume,
                     second_variation_apply, volume)
from .flow import CriticalPoint, FlowOptions, HuntOptions, HuntReport, constrained_flow, hunt
from .grid import ConformalMetric, Field, TorusGrid, require_same_grid
from .io import field_from_text, field_to_text, load_field, save_field
from .spectral import Nondegeneracy, degeneracy_scan, nondegeneracy_check, torus_laplacian_eigenvalues

__all__ = [
    "ConformalMetric", "CriticalPoint", "Field", "FlowOptions", "HuntOptions", "HuntReport", "Nondegeneracy",
    "TorusGrid", "b_inner", "b_mean", "b_norm", "constrained_flow", "degeneracy_scan", "energy",
    "energy_gradient", "field_from_text", "field_to_text", "hunt", "linearized_apply", "load_field",
    "nondegeneracy_check", "project_volume", "require_same_grid", "save_field", "second_variation_apply",
    "torus_laplacian_eigenvalues", "volume",
]
