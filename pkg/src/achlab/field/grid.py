"""Periodic grids, conformal weights and sampled fields."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from ..errors import GridMismatch, ShapeError


@dataclass(frozen=True)
class TorusGrid:
    """Cell-centered grid on the flat torus prod_k [0, L_k)."""

    shape: Tuple[int, ...]
    lengths: Tuple[float, ...] = None

    def __post_init__(self):
        shape = tuple(int(s) for s in np.atleast_1d(self.shape))
        lengths = self.lengths
        lengths = (1.0,) * len(shape) if lengths is None else tuple(float(x) for x in np.atleast_1d(lengths))
        if len(shape) not in (1, 2):
            raise ShapeError("only 1-D and 2-D tori are supported")
        if len(lengths) != len(shape):
            raise ShapeError("shape and lengths disagree in dimension")
        if min(shape) < 8:
            raise ShapeError("every axis needs at least 8 cells")
        if min(lengths) <= 0:
            raise ShapeError("side lengths must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / s for L, s in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis_coordinates(self, k: int) -> np.ndarray:
        return (np.arange(self.shape[k]) + 0.5) * self.spacing[k]

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays, one per axis, each of full grid shape."""
        return tuple(np.meshgrid(*[self.axis_coordinates(k) for k in range(self.n)], indexing="ij"))

    def points(self) -> np.ndarray:
        """Cell centers as an array of shape (size, n) in row-major order."""
        return np.stack([c.reshape(-1) for c in self.coordinates()], axis=1)

    def wrap(self, delta):
        """Minimal-image reduction of coordinate differences (last axis = n)."""
        L = np.asarray(self.lengths)
        return delta - L * np.floor(delta / L + 0.5)

    def reduce(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.mod(x, np.asarray(self.lengths))

    def distance(self, x, y):
        d = self.wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return np.sqrt(np.sum(d * d, axis=-1))

    def header(self) -> str:
        return ("n={} shape={} lengths={}".format(
            self.n, ",".join(str(s) for s in self.shape), ",".join(repr(L) for L in self.lengths)))


def require_same_grid(*grids: TorusGrid) -> TorusGrid:
    first = grids[0]
    for other in grids[1:]:
        if other != first:
            raise GridMismatch(f"grid {other.shape}/{other.lengths} differs from {first.shape}/{first.lengths}")
    return first


class ConformalMetric:
    """Conformal factor rho sampled per cell, with weights a = rho^(n-2), b = rho^n."""

    def __init__(self, grid: TorusGrid, rho=None, expression: str = "1"):
        self.grid = grid
        rho = np.ones(grid.shape) if rho is None else np.asarray(rho, dtype=float)
        if rho.shape != grid.shape:
            raise ShapeError("rho must have the grid shape")
        if not np.all(np.isfinite(rho)) or rho.min() <= 0:
            raise ValueError("rho must be finite and strictly positive")
        rho = rho.copy()
        rho.setflags(write=False)
        self.rho = rho
        self.expression = expression
        self.flat = bool(np.all(rho == 1.0))

    @cached_property
    def a(self) -> np.ndarray:
        return self.rho ** (self.grid.n - 2)

    @cached_property
    def b(self) -> np.ndarray:
        return self.rho ** self.grid.n

    @cached_property
    def volume(self) -> float:
        return float(np.sum(self.b) * self.grid.cell_volume)

    @classmethod
    def flat_metric(cls, grid: TorusGrid) -> "ConformalMetric":
        return cls(grid)

    @classmethod
    def from_expression(cls, grid: TorusGrid, expr: str) -> "ConformalMetric":
        """Build rho from a short expression.

        ``1``
            flat metric.
        ``bump:A,x0``
            rho = 1 + A prod_k cos(2 pi (x_k - x0) / L_k).
        ``wave:A,x0``
            rho = 1 + A cos(2 pi (x_1 - x0) / L_1), varying along the first axis only.
        """
        text = expr.strip()
        if text in ("1", "flat", "1.0"):
            return cls(grid, expression="1")
        kind, _, args = text.partition(":")
        try:
            vals = [float(x) for x in args.split(",")] if args else []
        except ValueError as exc:
            raise ValueError(f"cannot parse metric expression {expr!r}") from exc
        amp = vals[0] if vals else 0.0
        x0 = vals[1] if len(vals) > 1 else 0.0
        coords = grid.coordinates()
        if kind == "bump":
            prod = np.ones(grid.shape)
            for k in range(grid.n):
                prod = prod * np.cos(2 * np.pi * (coords[k] - x0) / grid.lengths[k])
            rho = 1.0 + amp * prod
        elif kind == "wave":
            rho = 1.0 + amp * np.cos(2 * np.pi * (coords[0] - x0) / grid.lengths[0])
        else:
            raise ValueError(f"unknown metric expression {expr!r}")
        return cls(grid, rho, expression=text)


class Field:
    """m-component samples of shape (m, *grid.shape)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: TorusGrid, values):
        vals = np.asarray(values, dtype=float)
        if vals.shape == grid.shape:
            vals = vals[None]
        if vals.shape[1:] != grid.shape:
            raise ShapeError(f"values of shape {vals.shape} do not fit grid {grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field samples must be finite")
        self.grid = grid
        self.values = vals

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, grid: TorusGrid, c) -> "Field":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(grid, np.broadcast_to(c.reshape((-1,) + (1,) * grid.n), (c.size,) + grid.shape).copy())

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def roll(self, shift) -> "Field":
        """Cyclic shift by whole cells along each axis."""
        shift = tuple(int(s) for s in np.atleast_1d(shift))
        return Field(self.grid, np.roll(self.values, shift, axis=tuple(range(1, self.grid.n + 1))))

    def __add__(self, other):
        o = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values - o)

    def __mul__(self, s):
        return Field(self.grid, self.values * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Field(m={self.m}, shape={self.grid.shape})"
