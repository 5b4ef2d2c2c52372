"""Real short-range potentials on a grid, plus the builtin catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridError
from .numgrid import Grid, SampledFunction

TAIL_TOL = 1e-8
# Where |q| falls below this fraction of its peak the potential is treated as zero.
SUPPORT_REL = 1e-15


@dataclass(frozen=True)
class Potential:
    """A real potential sampled on ``grid``.

    ``func`` evaluates q at arbitrary x (analytic for builtins, a cubic spline
    for ingested samples).  ``breakpoints`` lists jump locations so that ODE
    integration can restart there.
    """

    samples: SampledFunction
    func: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple = ()
    name: str = "sampled"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = self.samples.values
        if np.max(np.abs(v.imag), initial=0.0) > 1e-14:
            raise GridError("potential must be real-valued")
        if max(abs(v[0].real), abs(self.func(np.array([self.grid.L]))[0])) >= TAIL_TOL:
            raise GridError(
                f"potential {self.name!r} does not decay inside the grid (|q(+-L)| >= {TAIL_TOL})"
            )

    @classmethod
    def from_function(cls, grid: Grid, func, breakpoints=(), name="custom", params=None) -> "Potential":
        vals = np.asarray(func(grid.x), dtype=float)
        return cls(SampledFunction(grid, vals), func, tuple(breakpoints), name, dict(params or {}))

    @classmethod
    def from_samples(cls, grid: Grid, values, name="sampled") -> "Potential":
        vals = np.real_if_close(np.asarray(values))
        vals = np.asarray(vals, dtype=float)
        xs = grid.x
        spline = CubicSpline(np.append(xs, grid.L), np.append(vals, vals[0]))

        def func(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= -grid.L) & (x <= grid.L), spline(x), 0.0)

        return cls(SampledFunction(grid, vals), func, (), name, {})

    @property
    def grid(self) -> Grid:
        return self.samples.grid

    @property
    def values(self) -> np.ndarray:
        return self.samples.values.real

    @property
    def m_norm(self) -> float:
        """int |q| (1 + |x|) dx by the grid rule."""
        x = self.grid.x
        return float(self.grid.h * np.sum(np.abs(self.values) * (1 + np.abs(x))))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    def support(self) -> tuple[float, float]:
        """Smallest interval outside of which |q| < SUPPORT_REL * max|q| (padded by one step)."""
        v = np.abs(self.values)
        if not v.any():
            return 0.0, 0.0
        idx = np.nonzero(v >= SUPPORT_REL * v.max())[0]
        x = self.grid.x
        lo = max(x[idx[0]] - self.grid.h, -self.grid.L)
        hi = min(x[idx[-1]] + self.grid.h, self.grid.L)
        for b in self.breakpoints:
            lo, hi = min(lo, b), max(hi, b)
        return float(lo), float(hi)

    def scaled(self, factor: float) -> "Potential":
        f = self.func
        return Potential(
            SampledFunction(self.grid, factor * self.values),
            lambda x: factor * f(x),
            self.breakpoints,
            self.name,
            {**self.params, "scale": self.params.get("scale", 1.0) * factor},
        )

    def depth_bound(self) -> float:
        """sqrt(max of the attractive part), an upper bound for bound-state decay rates."""
        return float(np.sqrt(max(-self.values.min(), 0.0)))


def zero(grid: Grid) -> Potential:
    return Potential.from_function(grid, lambda x: np.zeros_like(np.asarray(x, dtype=float)), name="zero")


def gaussian_well(grid: Grid, depth: float = 1.0, width: float = 1.0) -> Potential:
    return Potential.from_function(
        grid,
        lambda x: -depth * np.exp(-(np.asarray(x, dtype=float) / width) ** 2),
        name="gaussian_well",
        params={"depth": depth, "width": width},
    )


def square_well(grid: Grid, depth: float = 0.5, half_width: float = 1.0) -> Potential:
    def func(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < half_width, -depth, 0.0)

    return Potential.from_function(
        grid, func, breakpoints=(-half_width, half_width), name="square_well",
        params={"depth": depth, "half_width": half_width},
    )


def sech2(grid: Grid, m: Optional[int] = None, depth: Optional[float] = None) -> Potential:
    """q = -depth sech^2 x; ``m`` selects the reflectionless depth m(m+1)."""
    if (m is None) == (depth is None):
        raise ValueError("give exactly one of m or depth")
    if depth is None:
        depth = m * (m + 1)

    def func(x):
        return -depth / np.cosh(np.asarray(x, dtype=float)) ** 2

    return Potential.from_function(grid, func, name="sech2", params={"depth": float(depth)})


CATALOG = {
    "zero": zero,
    "gaussian_well": gaussian_well,
    "square_well": square_well,
    "sech2": sech2,
}


def builtin(name: str, grid: Grid, **params) -> Potential:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown builtin potential {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(grid, **params)


def default_catalog(grid: Grid) -> list[Potential]:
    """The builtin potentials at their default parameters (used for calibration and checks)."""
    return [
        zero(grid),
        gaussian_well(grid),
        square_well(grid),
        sech2(grid, m=1),
        sech2(grid, m=2),
    ]
