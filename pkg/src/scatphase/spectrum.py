"""Bound states k = i*kappa of -psi'' + q psi = k^2 psi and their norming constants."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import ScatteringWarning, SolverError
from .forward import ATOL, RTOL, _segments, jost_wronskian_normalized
from .potential import Potential

KAPPA_FLOOR = 1e-4
SCAN_DENSITY = 400  # sign-scan points per unit kappa
GAP_TOL = 1e-2


@dataclass(frozen=True)
class BoundStateSet:
    """Decay rates kappa_j (eigenvalues -kappa_j^2), increasing, with norming constants M_j."""

    kappas: np.ndarray
    norming: Optional[np.ndarray] = None

    def __post_init__(self):
        kap = np.asarray(self.kappas, dtype=float).reshape(-1)
        object.__setattr__(self, "kappas", kap)
        if np.any(kap <= 0) or np.any(np.diff(kap) <= 0):
            raise ValueError("kappas must be positive and strictly increasing")
        if self.norming is not None:
            m = np.asarray(self.norming, dtype=float).reshape(-1)
            if m.shape != kap.shape or np.any(m <= 0):
                raise ValueError("norming constants must be positive, one per kappa")
            object.__setattr__(self, "norming", m)

    @property
    def count(self) -> int:
        return int(self.kappas.size)

    @property
    def energies(self) -> np.ndarray:
        return -self.kappas ** 2

    @classmethod
    def empty(cls) -> "BoundStateSet":
        return cls(np.empty(0), np.empty(0))


def _w(q: Potential, kappa) -> np.ndarray:
    return jost_wronskian_normalized(q, 1j * np.atleast_1d(kappa)).real


def bound_states(q: Potential, kappa_max: Optional[float] = None,
                 kappa_floor: float = KAPPA_FLOOR) -> BoundStateSet:
    """Zeros of W(f_-, f_+)(i kappa) on (kappa_floor, kappa_max], by sign scan and bisection."""
    if kappa_max is None:
        kappa_max = q.depth_bound()
    if q.is_zero or kappa_max <= kappa_floor:
        return BoundStateSet.empty()
    npts = max(64, math.ceil(SCAN_DENSITY * (kappa_max - kappa_floor))) + 1
    grid = np.linspace(kappa_floor, kappa_max, npts)
    w = _w(q, grid)
    scale = float(np.max(np.abs(w)))
    if scale == 0.0 or not np.isfinite(scale):
        raise SolverError("Wronskian scan returned no usable values")
    # |W| grows exponentially with kappa, so judge the threshold against its neighbourhood
    local = float(np.max(np.abs(w[:41])))
    if abs(w[0]) < 1e-2 * local:
        warnings.warn(
            f"near-threshold state: |W(i*{kappa_floor})| is {abs(w[0]) / local:.2e} of its local scale",
            ScatteringWarning, stacklevel=2,
        )

    roots = []
    f = lambda kap: _w(q, kap)[0]
    for i in np.nonzero(np.sign(w[:-1]) * np.sign(w[1:]) < 0)[0]:
        roots.append(brentq(f, grid[i], grid[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps))
    roots.extend(_refine_touching(q, grid, w, scale))
    roots = np.array(sorted(roots))
    for r in roots:
        if abs(f(r)) > 1e-8 * scale:
            warnings.warn(f"bound state at kappa={r:.10g} has |W| above 1e-8 of scale", ScatteringWarning,
                          stacklevel=2)
    return BoundStateSet(roots)


def _refine_touching(q: Potential, grid, w, scale) -> list[float]:
    """Look for zero pairs hidden between scan points (|W| dips without a sign change)."""
    a = np.abs(w)
    found = []
    same = np.sign(w[:-2]) == np.sign(w[2:])
    dips = np.nonzero((a[1:-1] < a[:-2]) & (a[1:-1] < a[2:]) & same & (a[1:-1] < 1e-3 * scale))[0] + 1
    for i in dips:
        fine = np.linspace(grid[i - 1], grid[i + 1], 201)
        wf = _w(q, fine)
        idx = np.nonzero(np.sign(wf[:-1]) * np.sign(wf[1:]) < 0)[0]
        if idx.size == 0:
            warnings.warn(
                f"degenerate (non-sign-changing) Wronskian minimum near kappa={grid[i]:.6g} not resolved",
                ScatteringWarning, stacklevel=3,
            )
            continue
        f = lambda kap: _w(q, kap)[0]
        for j in idx:
            found.append(brentq(f, fine[j], fine[j + 1], xtol=1e-13))
        warnings.warn(f"resolved {idx.size} closely spaced states near kappa={grid[i]:.6g} by refinement",
                      ScatteringWarning, stacklevel=3)
    return found


def _norm_integral(q: Potential, kappa: float, x0: float, x1: float, sign: int) -> tuple[float, float]:
    """Integrate g'' = (q + kappa^2) g from x0 to x1 with g = exp(-sign*kappa*(x - x0)).

    Returns (g(x1), int g^2 over the traversed interval, taken positive).
    """
    y = np.array([1.0, -sign * kappa, 0.0])
    k2 = kappa * kappa

    def rhs(x, s):
        return [s[1], (q.func(np.array([x]))[0] + k2) * s[0], s[0] * s[0]]

    nodes = _segments(q, x0, x1)
    for a, b in zip(nodes[:-1], nodes[1:]):
        if a == b:
            continue
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=RTOL, atol=ATOL)
        if not sol.success:
            raise SolverError(f"norm integration failed for kappa={kappa}: {sol.message}")
        y = sol.y[:, -1]
    return float(y[0]), abs(float(y[2]))


def norming_constants(q: Potential, B: BoundStateSet) -> BoundStateSet:
    """M_j = 1 / int f_+(i kappa_j, x)^2 dx for every located state.

    f_+ is integrated from the right edge and f_- from the left; at a bound
    state they are proportional, which gives f_+ on the left half without
    integrating into the growing direction.
    """
    if B.count == 0:
        return BoundStateSet.empty()
    lo, hi = q.support()
    xm = float(np.clip(0.0, lo, hi))
    out = []
    for kap in B.kappas:
        gp, ip = _norm_integral(q, kap, hi, xm, +1)
        gm, im = _norm_integral(q, kap, lo, xm, -1)
        if gm == 0.0:
            raise SolverError(f"cannot match Jost solutions for kappa={kap}")
        tail = 1.0 / (2 * kap)
        # int f_+^2 = exp(-2 kappa hi) * (...)
        inner = ip + tail + (gp / gm) ** 2 * (im + tail)
        log_m = 2 * kap * hi - math.log(inner) if inner > 0 else math.inf
        if not np.isfinite(inner) or inner <= 0 or log_m > 700:
            raise SolverError(f"bound state kappa={kap} is not normalizable numerically")
        out.append(math.exp(log_m))
    return BoundStateSet(B.kappas, np.array(out))


def spectrum_spacing(B: BoundStateSet, gap_tol: float = GAP_TOL) -> tuple[float, bool]:
    """(smallest adjacent gap in kappa, gap < gap_tol); inf/False with fewer than two states."""
    if B.count < 2:
        return math.inf, False
    gap = float(np.min(np.diff(B.kappas)))
    return gap, gap < gap_tol
