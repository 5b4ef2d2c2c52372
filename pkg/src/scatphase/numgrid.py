"""Uniform grids, Fourier transforms and modulus/phase analysis.

Transform convention used everywhere in the package::

    F(k) = int f(x) exp(-i k x) dx,        f(x) = (1/2pi) int F(k) exp(i k x) dk

On a grid ``x_j = -L + j h`` (``h = 2L/N``) with ``k_m = pi m / L``,
``m = -N/2 .. N/2-1``, both integrals are evaluated by the trapezoid
(equivalently rectangle, for periodic data) rule, so the discrete pair is an
exact inverse and discrete Parseval holds to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import eval_genlaguerre

from .errors import GridError, ScatteringWarning

# 1/sqrt(2 pi): ||f||_2 = PLANCHEREL_CONST * ||F||_2 under the convention above.
PLANCHEREL_CONST = 1.0 / np.sqrt(2.0 * np.pi)
MOD_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L) with N points (N a power of two, N >= 16)."""

    L: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise GridError(f"half width must be positive, got {self.L}")
        n = int(self.N)
        if n != self.N or n < 16 or n & (n - 1):
            raise GridError(f"N must be a power of two >= 16, got {self.N}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dk(self) -> float:
        return np.pi / self.L

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def m(self) -> np.ndarray:
        return np.arange(-self.N // 2, self.N // 2)

    @property
    def k(self) -> np.ndarray:
        return self.dk * self.m

    @property
    def k_max(self) -> float:
        return np.pi / self.h


def _check_values(grid: Grid, values) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.shape != (grid.N,):
        raise GridError(f"expected {grid.N} samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError("samples must be finite")
    return arr


@dataclass(frozen=True)
class SampledFunction:
    """Complex samples f(x_j) on a grid."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.h * np.sum(np.abs(self.values) ** 2)))


@dataclass(frozen=True)
class SpectralFunction:
    """Complex samples F(k_m) on the k-grid induced by ``grid`` (ascending k)."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values))

    @property
    def k(self) -> np.ndarray:
        return self.grid.k

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.dk * np.sum(np.abs(self.values) ** 2)))


@dataclass(frozen=True)
class PhaseProfile:
    """Modulus and unwrapped phase of a spectral function.

    ``defined`` is False where the modulus is at or below the floor; the phase
    there is carried over from the nearest defined neighbour towards k = 0.
    """

    grid: Grid
    phase: np.ndarray
    modulus: np.ndarray
    defined: np.ndarray
    mod_floor: float

    def reconstruct(self) -> np.ndarray:
        return self.modulus * np.exp(1j * self.phase)


def _alternating(grid: Grid) -> np.ndarray:
    return np.where(grid.m % 2 == 0, 1.0, -1.0)


def fft_forward(f: SampledFunction) -> SpectralFunction:
    """F(k_m) = h * sum_j f(x_j) exp(-i k_m x_j)."""
    g = f.grid
    spec = np.fft.fftshift(np.fft.fft(f.values)) * _alternating(g) * g.h
    return SpectralFunction(g, spec)


def fft_inverse(F: SpectralFunction) -> SampledFunction:
    """f(x_j) = (dk / 2pi) * sum_m F(k_m) exp(i k_m x_j); exact inverse of fft_forward."""
    g = F.grid
    vals = np.fft.ifft(np.fft.ifftshift(F.values * _alternating(g))) / g.h
    return SampledFunction(g, vals)


def spectral_derivative(f: SampledFunction) -> SampledFunction:
    """Derivative by multiplication with ik; the Nyquist mode is dropped."""
    F = fft_forward(f)
    mult = 1j * F.k
    mult[0] = 0.0  # k = -N/2 mode has no symmetric partner
    return fft_inverse(SpectralFunction(F.grid, F.values * mult))


def fd_derivative(f: SampledFunction) -> SampledFunction:
    """Fourth-order central differences (periodic wrap), used as a cross-check."""
    v = f.values
    d = (-np.roll(v, -2) + 8 * np.roll(v, -1) - 8 * np.roll(v, 1) + np.roll(v, 2)) / (12 * f.grid.h)
    return SampledFunction(f.grid, d)


def fd4(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences of non-periodic samples (second-order one-sided at the ends)."""
    v = np.asarray(v)
    if v.size < 5:
        return np.gradient(v, h, edge_order=1 if v.size < 3 else 2)
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d[:2] = np.gradient(v[:4], h, edge_order=2)[:2]
    d[-2:] = np.gradient(v[-4:], h, edge_order=2)[-2:]
    return d


def _unwrap_outward(angle: np.ndarray, defined: np.ndarray, start: int) -> np.ndarray:
    """Nearest-branch continuation from ``start`` in both directions."""

    def one_side(a, ok):
        # carry the last defined value across undefined samples, then unwrap
        idx = np.where(ok, np.arange(a.size), 0)
        np.maximum.accumulate(idx, out=idx)
        return np.unwrap(a[idx])

    up = one_side(angle[start:], defined[start:])
    down = one_side(angle[start::-1], defined[start::-1])[::-1]
    return np.concatenate([down[:-1], up])


def modulus_phase(F: SpectralFunction, mod_floor_rel: float = MOD_FLOOR_REL) -> PhaseProfile:
    """Split F into |F| and a continuous phase anchored at the defined point nearest k = 0."""
    modulus = np.abs(F.values)
    peak = modulus.max() if modulus.size else 0.0
    floor = mod_floor_rel * peak
    defined = modulus > floor
    if not defined.any():
        zeros = np.zeros(F.grid.N)
        return PhaseProfile(F.grid, zeros, modulus, defined, floor)
    k = F.k
    order = np.argsort(np.abs(k), kind="stable")
    start = int(order[np.argmax(defined[order])])
    phase = _unwrap_outward(np.angle(F.values), defined, start)
    return PhaseProfile(F.grid, phase, modulus, defined, floor)


def plancherel_residual(f: SampledFunction) -> float:
    """| ||f|| - ||F||/sqrt(2 pi) | / ||f||, or 0 for the zero function."""
    nf = f.l2_norm()
    if nf == 0.0:
        return 0.0
    nF = fft_forward(f).l2_norm()
    return abs(nf - PLANCHEREL_CONST * nF) / nf


def sup_estimate_check(f: SampledFunction) -> tuple[float, float]:
    """Return (max|f|^2, 2 ||f|| ||f'||) with the derivative taken spectrally."""
    lhs = float(np.max(np.abs(f.values)) ** 2)
    rhs = 2.0 * f.l2_norm() * spectral_derivative(f).l2_norm()
    return lhs, rhs


def translate_phase(F: SpectralFunction, a: float, t: float) -> SpectralFunction:
    """Multiply by exp(i a t k): the transform of f(x + a t)."""
    return SpectralFunction(F.grid, F.values * np.exp(1j * a * t * F.k))


def blaschke_phase(n: int, k) -> np.ndarray:
    """Continuous argument of ((i - k)/(i + k))**n, zero at k = 0."""
    return 2.0 * n * np.arctan(np.asarray(k, dtype=float))


def _laguerre_profile(n: int, y: np.ndarray) -> np.ndarray:
    """y (-1)^(n-1) 2pi exp(-y) L^1_{n-1}(2y) for y >= 0, zero otherwise."""
    out = np.zeros_like(y)
    pos = y >= 0
    yp = y[pos]
    out[pos] = yp * (-1) ** (n - 1) * 2 * np.pi * np.exp(-yp) * eval_genlaguerre(n - 1, 1, 2 * yp)
    return out


def _support_orientation(f: SampledFunction, tol: float = 1e-8) -> tuple[int, float]:
    """+1 if the mass sits on x >= 0, -1 if on x <= 0; also the leaked mass fraction."""
    x = f.x
    w = np.abs(f.values) ** 2
    total = w.sum()
    right = w[x > 0].sum() / total
    left = w[x < 0].sum() / total
    if left <= right:
        return 1, float(left)
    return -1, float(right)


def catastrophe_family(n: int, grid: Grid) -> tuple[SpectralFunction, SampledFunction, SampledFunction]:
    """Members of the test sequence F_n(k) = ((i-k)/(i+k))^n / (1+k^2).

    Returns ``(F_n, f_n, closed_form)``.  ``f_n`` is the numerical inverse
    transform.  ``closed_form`` is the Laguerre profile
    ``c/n * y (-1)^(n-1) 2pi e^-y L^1_{n-1}(2y)`` on the half-line
    ``y = s x >= 0``; the orientation ``s`` and constant ``c`` are fitted on
    n = 1.  ``closed_form.meta`` also carries the least-squares amplitude of
    the bare profile for this n (``amplitude``), which is what pins the 1/n.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    coarse = grid.N < 64 * n
    if coarse:
        warnings.warn(f"grid N={grid.N} is coarse for family member n={n}", ScatteringWarning, stacklevel=2)
    k = grid.k
    modulus = 1.0 / (1.0 + k * k)
    F = SpectralFunction(grid, modulus * np.exp(1j * blaschke_phase(n, k)), meta={"n": n})
    f = fft_inverse(F)
    f.meta.update(n=n, coarse_grid=coarse)

    orientation, leak, scale = _fit_closed_form(grid)
    profile = _laguerre_profile(n, orientation * grid.x)
    amplitude = float(np.real(np.vdot(profile, f.values)) / np.vdot(profile, profile).real)
    cand = scale / n * profile
    closed = SampledFunction(grid, cand, meta={
        "n": n,
        "orientation": orientation,
        "constant": scale,
        "amplitude": amplitude,
        "leaked_mass": leak,
        "max_deviation": float(np.max(np.abs(f.values - cand))),
    })
    return F, f, closed


_FIT_CACHE: dict[Grid, tuple[int, float, float]] = {}


def _fit_closed_form(grid: Grid) -> tuple[int, float, float]:
    if grid not in _FIT_CACHE:
        k = grid.k
        F1 = SpectralFunction(grid, -1.0 / (k + 1j) ** 2)
        f1 = fft_inverse(F1)
        orientation, leak = _support_orientation(f1)
        g1 = _laguerre_profile(1, orientation * grid.x)
        scale = float(np.real(np.vdot(g1, f1.values)) / np.vdot(g1, g1).real)
        _FIT_CACHE[grid] = (orientation, leak, scale)
    return _FIT_CACHE[grid]


def family_metrics(n_list: Sequence[int], grid: Grid) -> list[dict]:
    """Norms and sup-norms of f_n and its spectral derivative, one row per n."""
    rows = []
    for n in n_list:
        _, f, _ = catastrophe_family(n, grid)
        df = spectral_derivative(f)
        rows.append({
            "n": int(n),
            "l2_norm": f.l2_norm(),
            "grad_l2": df.l2_norm(),
            "sup_abs": float(np.max(np.abs(f.values))),
            "sup_grad": float(np.max(np.abs(df.values))),
        })
    return rows
