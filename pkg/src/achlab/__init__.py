"""Desk-scale laboratory for vectorial Allen-Cahn-Hilliard energies on flat tori.

Subpackages and modules, roughly in dependency order:

* ``potential``: multi-well potentials and sampled checks of their growth class
* ``tension``: surface tensions as degenerate-metric path lengths
* ``field``: grids, conformal metrics, the energy, constrained flows, spectra
* ``cluster``: discrete weighted clusters, perimeters, threshold dynamics
* ``recovery``: transition profiles and volume-exact recovery fields
* ``photography``: photographs of torus points and the barycenter map
* ``experiments``: configuration, recipes and the ``achlab`` command line

Setting ``ACHLAB_DISABLE_NUMBA=1`` before import swaps the compiled kernels
for their numpy equivalents.
"""

__version__ = "0.1.0"
DESIGN_REVISION = "1"

from . import errors  # noqa: E402
from .potential import Potential, build_double_well, build_product_triple_well, evaluate  # noqa: E402
from .tension import TensionMatrix, check_immiscible, geodesic_distance, tension_matrix  # noqa: E402

__all__ = [
    "DESIGN_REVISION", "Potential", "TensionMatrix", "__version__", "build_double_well",
    "build_product_triple_well", "check_immiscible", "errors", "evaluate", "geodesic_distance", "tension_matrix",
]
