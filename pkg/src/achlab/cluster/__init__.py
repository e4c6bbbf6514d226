"""Weighted clusters on the periodic grid and threshold dynamics."""

from .core import (Cluster, DistanceLookup, IsoBounds, chamber_perimeters, euclidean_isoperimetric_constant,
                   flat_distance, from_field, interface_measure, interior_diameter, interior_diameter_report,
                   isoperimetric_bounds, isotropic_interface_measure, isotropic_multi_perimeter,
                   isotropic_perimeter, large_subdomain_report, multi_perimeter, periodic_components, volumes)
from .io import cluster_from_text, cluster_to_text, load_cluster, save_cluster
from .mbo import MBOOptions, MBORun, initial_cluster, mbo_minimize, mbo_run, restore_volumes

__all__ = [
    "Cluster", "DistanceLookup", "IsoBounds", "MBOOptions", "MBORun", "chamber_perimeters",
    "cluster_from_text", "cluster_to_text", "euclidean_isoperimetric_constant", "flat_distance", "from_field",
    "initial_cluster", "interface_measure", "interior_diameter", "interior_diameter_report",
    "isoperimetric_bounds", "isotropic_interface_measure", "isotropic_multi_perimeter", "isotropic_perimeter",
    "large_subdomain_report", "load_cluster", "mbo_minimize", "mbo_run", "multi_perimeter",
    "periodic_components", "restore_volumes", "save_cluster", "volumes",
]
