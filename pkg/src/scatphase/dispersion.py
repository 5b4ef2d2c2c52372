"""Transmission phase, the dispersion (trace) representation of s11, and phase winding.

The transmission coefficient factors as::

    s11(k) = prod_j (k + i kappa_j)/(k - i kappa_j) * exp( (1/2 pi i) int g(k') / (k' - k - i0) dk' )

with ``g = ln(1 - |s12|^2)``.  For real k the exponent is
``g(k)/2 - (i/2pi) PV int g(k')/(k' - k) dk'``.

In the generic case (no half-bound state) |s11| vanishes linearly at k = 0,
so g has a logarithmic singularity there.  It is removed analytically by
subtracting ``ln|phi_a|^2`` with ``phi_a(k) = k (k + i sqrt2 a)/(k + i a)^2``
(a = the threshold scale where |s11|^2 reaches 1/2), whose outer factor is
``phi_a`` itself; the smooth remainder goes through a subtracted
principal-value quadrature.  The threshold must be resolved by the k grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidDataError, ScatteringWarning
from .forward import ScatteringData
from .spectrum import BoundStateSet

TRACE_TOL = 1e-3
GAP_FLOOR = 1e-12
WINDING_TOL = 0.1
TAPER_FRACTION = 0.1
_GL_ORDER = 16


@dataclass(frozen=True)
class PhaseDispersion:
    """delta = unwrapped arg s11 (zero at the top of the band), phi = 2 delta.

    ``threshold_reflection`` is |s12| at the lowest k; it tells a generic
    potential (|s12| -> 1) from an exceptional one and shifts the winding.
    """

    k_grid: np.ndarray
    delta: np.ndarray
    phi: np.ndarray
    blaschke: Optional[np.ndarray] = None
    outer: Optional[np.ndarray] = None
    threshold_reflection: float = 0.0
    gap: Optional[np.ndarray] = None

    @property
    def s11_reconstructed(self) -> Optional[np.ndarray]:
        if self.blaschke is None or self.outer is None:
            return None
        return self.blaschke * self.outer


def unwrap_from_top(angle):
    """Unwrap starting at the last sample, so the top of the band keeps its principal value."""
    a = np.asarray(angle, dtype=float)
    return np.unwrap(a[::-1])[::-1]


def _gap_mask(s11: np.ndarray) -> np.ndarray:
    gap = np.abs(s11) < GAP_FLOOR
    if gap.any():
        warnings.warn(f"|s11| < {GAP_FLOOR} at {int(gap.sum())} k-points: phase undefined there",
                      ScatteringWarning, stacklevel=3)
    return gap


def blaschke_product(B: BoundStateSet, k) -> np.ndarray:
    """prod_j (i kappa_j + k)/(k - i kappa_j); unit modulus on the real axis."""
    k = np.asarray(k, dtype=float)
    out = np.ones(k.shape, dtype=complex)
    for kap in B.kappas:
        out *= (1j * kap + k) / (k - 1j * kap)
    return out


def transmission_phase(S: ScatteringData, B: Optional[BoundStateSet] = None, power: int = 2) -> PhaseDispersion:
    """Unwrapped transmission phase; with ``B`` also the Blaschke and outer factors."""
    k = np.asarray(S.k_grid, dtype=float)
    gap = _gap_mask(S.s11)
    delta = unwrap_from_top(np.angle(S.s11))
    thr = float(abs(S.s12[np.argmin(k)])) if k.size else 0.0
    blaschke = outer = None
    if B is not None:
        blaschke = blaschke_product(B, k)
        outer = outer_factor(np.abs(S.s12), k, power=power)
    return PhaseDispersion(k, delta, 2.0 * delta, blaschke, outer, thr, gap)


def _is_generic(g: np.ndarray, k: np.ndarray) -> bool:
    """True when g ~ ln(k^2) at threshold (transmission vanishing linearly).

    Either the log-slope at the first samples is close to one, or the
    transmission is already small there.
    """
    i0, i1 = 0, min(2, k.size - 1)
    if i1 == i0 or k[i0] <= 0:
        return False
    slope = (g[i1] - g[i0]) / (2.0 * math.log(k[i1] / k[i0]))
    return slope > 0.5 or g[i0] < math.log(0.5)


def _split_scale(g: np.ndarray, k: np.ndarray) -> float:
    """k where |s11|^2 first reaches 1/2 (the threshold scale), bounded to the band."""
    above = np.nonzero(g >= math.log(0.5))[0]
    a = float(k[above[0]]) if above.size else float(k[-1]) / 4
    return float(np.clip(a, k[0], k[-1] / 4))


def _log_phi_a(k, a):
    return np.log(k * k * (k * k + 2 * a * a) / (k * k + a * a) ** 2)


def _phi_a(k, a):
    return k * (k + 1j * math.sqrt(2.0) * a) / (k + 1j * a) ** 2


def _pv_even(h: CubicSpline, K: float, k: np.ndarray, hk: np.ndarray, panels: int) -> np.ndarray:
    """PV int_{-K}^{K} h(s)/(s - k) ds for even h, by subtraction of h(k)."""
    xg, wg = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(0.0, K, panels + 1)
    half = 0.5 * np.diff(edges)
    s = (edges[:-1, None] + half[:, None] * (xg[None, :] + 1.0)).ravel()
    w = (half[:, None] * wg[None, :]).ravel()
    hs = h(s)
    out = np.empty(k.size)
    for i, (kk, hkk) in enumerate(zip(k, hk)):
        d = s - kk
        near = np.abs(d) < 1e-12 * max(1.0, kk)
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = (hs - hkk) * 2.0 * kk / ((s + kk) * d)
        if near.any():
            integrand[near] = h(s[near], 1) * 2.0 * kk / (s[near] + kk)
        edge = hkk * math.log(abs((K - kk) / (K + kk))) if hkk != 0.0 else 0.0
        out[i] = np.dot(w, integrand) + edge
    return out


def outer_factor(reflection_mod, k_grid, power: int = 2, split_scale: Optional[float] = None) -> np.ndarray:
    """exp((1/2 pi i) int ln(1 - |s12|^power)/(k' - k - i0) dk') on k_grid (k > 0).

    ``power=2`` is the unitarity-consistent integrand; ``power=1`` the
    literal ln(1 - |s12|) variant, kept for comparison.  The data are taken as
    even in k (|s12(-k)| = |s12(k)|) and as reflectionless beyond the band.
    """
    r = np.asarray(reflection_mod, dtype=float)
    k = np.asarray(k_grid, dtype=float)
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if r.shape != k.shape:
        raise InvalidDataError("reflection modulus and k grid differ in shape")
    if k.size < 4 or np.any(k <= 0) or np.any(np.diff(k) <= 0):
        raise InvalidDataError("k grid must be positive, increasing, with at least 4 points")
    if np.any(r >= 1.0) or np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InvalidDataError("|s12| must lie in [0, 1): non-physical reflection data")
    g = np.log1p(-r ** power)
    generic = _is_generic(g, k)
    a = _split_scale(g, k) if split_scale is None else float(split_scale)
    h = g - _log_phi_a(k, a) if generic else g
    K = float(k[-1])
    # cosine taper over the top of the band so the truncated integral stays finite at k = K
    t0 = (1.0 - TAPER_FRACTION) * K
    taper = np.where(k <= t0, 1.0, 0.5 * (1.0 + np.cos(np.pi * np.clip((k - t0) / (K - t0), 0, 1))))
    h = h * taper
    # h is even and smooth: spline it in k with a mirrored threshold point
    ks = np.concatenate([[0.0], k])
    hs_ = np.concatenate([[h[0]], h])
    spline = CubicSpline(ks, hs_, bc_type=((1, 0.0), "not-a-knot"))
    panels = max(64, int(np.ceil(K / max(np.min(np.diff(k)), 1e-3))))
    pv = _pv_even(spline, K, k, h, panels)
    out = np.exp(0.5 * h - 0.5j / np.pi * pv)
    if generic:
        out = out * _phi_a(k, a)
    return out


def trace_reconstruct(reflection_mod, B: BoundStateSet, k_grid, power: int = 2) -> np.ndarray:
    """s11 on k_grid from |s12| and the bound states alone."""
    return outer_factor(reflection_mod, k_grid, power=power) * blaschke_product(B, k_grid)


def s21_from_symmetry(S: ScatteringData) -> np.ndarray:
    """-s12(-k) s11(k)/s11(-k) with s(-k) = conj s(k)."""
    gap = _gap_mask(S.s11)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.conj(S.s12) * S.s11 / np.conj(S.s11)
    out[gap] = np.nan
    return out


def levinson_count(P: PhaseDispersion, tol: float = WINDING_TOL) -> int:
    """Bound states from the phase winding (delta(k_min) - delta(k_max))/pi.

    Generic potentials (|s12| -> 1 at threshold) wind by n - 1/2; the half
    is added back before rounding.
    """
    if P.delta.size == 0:
        return 0
    w = (P.delta[0] - P.delta[-1]) / np.pi
    if P.threshold_reflection > 0.5:
        w += 0.5
    n = int(np.round(w))
    if abs(w - n) > tol:
        warnings.warn(f"non-integer phase winding {w:.3f}: k grid too coarse or near-threshold state",
                      ScatteringWarning, stacklevel=2)
    return max(n, 0)
