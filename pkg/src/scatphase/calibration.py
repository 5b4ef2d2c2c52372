"""Calibration of the shared constant C of the U,V and sup|q| estimates.

C is the largest ratio (estimate left side / right side at C = 1) over the
builtin catalog, times a safety factor of 2.  The frozen value lives in
``config.CALIBRATED_C``; ``calibrate_constant`` reproduces it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ScatteringWarning
from .forward import born_split, scattering_matrix
from .numgrid import Grid
from .phase_recon import potential_sup_bound, uv_bound_check, uv_system
from .potential import Potential, default_catalog

SAFETY = 2.0
CALIBRATION_GRID = (12.0, 512)
CALIBRATION_K = (0.05, 20.0, 400)


@dataclass(frozen=True)
class BoundRatios:
    name: str
    ratio_u: float
    ratio_v: float
    ratio_q: float
    gradient_share: float


def calibration_k_grid() -> np.ndarray:
    k0, k1, n = CALIBRATION_K
    return np.linspace(k0, k1, n)


def bound_ratios(q: Potential, k_grid) -> BoundRatios:
    """Left/right ratios of both estimates at C = 1, using exact I-terms and the exact phase."""
    k = np.asarray(k_grid, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScatteringWarning)
        S = scattering_matrix(q, k)
        split = born_split(q, S)
        phi = 2.0 * np.angle(S.s11)
        r = np.conj(split.i12) * np.exp(1j * phi) - split.i21
        sys_ = uv_system(k, phi, r.real, r.imag)
        rep = uv_bound_check(sys_, constant=1.0)
        sup = potential_sup_bound(split.i12, split.i21, k, constant=1.0)
    qmax = float(np.max(np.abs(q.values)))
    rq = 0.0 if qmax == 0.0 else (np.inf if sup == 0.0 else qmax / sup)
    return BoundRatios(q.name, rep.margin_u, rep.margin_v, rq, rep.gradient_share)


def calibrate_constant(grid: Grid | None = None, k_grid=None) -> tuple[float, list[BoundRatios]]:
    grid = grid or Grid(*CALIBRATION_GRID)
    k = calibration_k_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    rows = [bound_ratios(q, k) for q in default_catalog(grid)]
    worst = max(max(r.ratio_u, r.ratio_v, r.ratio_q) for r in rows)
    return SAFETY * worst, rows
