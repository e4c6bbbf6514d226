"""Exception and warning types raised across the package."""

from __future__ import annotations


class AchlabError(Exception):
    """Base class for every error raised by achlab."""


class DegenerateMinima(AchlabError, ValueError):
    """Minima are zero or linearly dependent."""


class InvalidEndpoint(AchlabError, ValueError):
    """A path endpoint lies outside the nonnegative orthant."""


class ShapeError(AchlabError, ValueError):
    """An array has the wrong shape or lacks a required symmetry."""


class GridMismatch(AchlabError, ValueError):
    """Two objects live on different grids."""


class BadTau(AchlabError, ValueError):
    """The profile regularization must be strictly positive."""


class EmptyInterior(AchlabError, ValueError):
    """The cluster has no interior cell."""


class EmptyBoundary(AchlabError, ValueError):
    """A chamber has no boundary, so its signed distance is undefined."""


class NegativeVolume(AchlabError, ValueError):
    """A volume vector has a negative entry."""


class VolumeTooLarge(AchlabError, ValueError):
    """The canonical cluster does not fit in a quarter of the torus."""


class ZeroMass(AchlabError, ValueError):
    """The field vanishes identically, so no barycenter exists."""


class ConfigError(AchlabError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if message else key)


class Blowup(AchlabError, FloatingPointError):
    """The energy became non-finite during a flow."""


class NonConvergence(AchlabError, RuntimeError):
    """An iterative solver hit its budget.

    The best iterate found so far is attached as ``partial`` and any
    context (for example the failing well pair) as ``context``.
    """

    def __init__(self, message: str, partial=None, context=None):
        super().__init__(message)
        self.partial = partial
        self.context = context


class EigSolverStall(UserWarning):
    """The eigensolver did not converge; the reported value is a best estimate."""


class NoBallHost(UserWarning):
    """Chamber 1 cannot host the volume-correction ball; a constant shift was used."""


class ResolutionWarning(UserWarning):
    """The grid spacing is too coarse for the requested interface width."""
