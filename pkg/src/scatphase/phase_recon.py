"""Phase-based reconstruction of the potential transform.

Notation: Q(k) = int q(x) exp(2ikx) dx = U + iV, and

    2ik s12 = Q + I12,      2ik s21 = conj(Q) + I21

so I12, I21 collect everything beyond first order.  With
exp(i phi) = s11(k)/s11(-k) the symmetry s21 = -s12(-k) s11(k)/s11(-k) gives

    (U - iV)(1 - exp(i phi)) = conj(I12) exp(i phi) - I21 =: R12 + i R21

i.e. the real 2x2 system

    U (1 - cos phi) - V sin phi       = R12
   -U sin phi       - V (1 - cos phi) = R21

with determinant -2(1 - cos phi): degenerate only where phi = 0 mod 2pi.
Other readings of the system and of R are available behind ``system=`` /
``reading=`` switches for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config
from .dispersion import blaschke_product, levinson_count, outer_factor, transmission_phase, unwrap_from_top
from .errors import InvalidDataError, ScatteringWarning
from .forward import born2_from_samples, scattering_matrix
from .numgrid import Grid, SampledFunction, fd4
from .potential import Potential
from .spectrum import BoundStateSet, bound_states, spectrum_spacing

SIN_FLOOR = 1e-6
TIKHONOV = 1e-12
DAMPING = 0.5
DENSITY_TOL = 1.0
GAP_TOL = 1e-2
SINGULAR_ABORT = 0.2

READINGS = ("derived", "literal", "literal_alt")
SYSTEMS = ("derived", "literal", "literal_closed_form")


@dataclass(frozen=True)
class UVSystem:
    k_grid: np.ndarray
    phi: np.ndarray
    r12: np.ndarray
    r21: np.ndarray
    u: np.ndarray
    v: np.ndarray
    singular: np.ndarray
    system: str = "derived"

    @property
    def q2k(self) -> np.ndarray:
        return self.u + 1j * self.v


def r_terms(i12, i21, phi, reading: str = "derived") -> tuple[np.ndarray, np.ndarray]:
    """Right-hand sides (R12, R21) of the U, V system.

    ``derived``: R = conj(I12) e^{i phi} - I21 (consistent with the symmetry relation).
    ``literal``:   R = -I12 + I21 cos phi + i I12 sin phi.
    ``literal_alt``: as ``literal`` with I21 in the sine term.
    """
    i12 = np.asarray(i12, dtype=complex)
    i21 = np.asarray(i21, dtype=complex)
    phi = np.asarray(phi, dtype=float)
    if reading == "derived":
        r = np.conj(i12) * np.exp(1j * phi) - i21
    elif reading == "literal":
        r = -i12 + i21 * np.cos(phi) + 1j * i12 * np.sin(phi)
    elif reading == "literal_alt":
        r = -i12 + i21 * np.cos(phi) + 1j * i21 * np.sin(phi)
    else:
        raise ValueError(f"reading must be one of {READINGS}")
    return r.real, r.imag


def system_matrix(phi, system: str = "derived") -> np.ndarray:
    """The 2x2 matrices A(phi), shape (n, 2, 2), with A @ (U, V) = (R12, R21)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    a = np.empty(phi.shape + (2, 2))
    if system == "derived":
        a[..., 0, 0], a[..., 0, 1] = 1 - c, -s
        a[..., 1, 0], a[..., 1, 1] = -s, -(1 - c)
    elif system in ("literal", "literal_closed_form"):
        a[..., 0, 0], a[..., 0, 1] = 1 - c, 1 - s
        a[..., 1, 0], a[..., 1, 1] = -s, 1 + c
    else:
        raise ValueError(f"system must be one of {SYSTEMS}")
    return a


def degeneracy(phi, system: str = "derived") -> np.ndarray:
    """|sin(phi/2)| for the derived system, |sin phi| for the literal forms."""
    phi = np.asarray(phi, dtype=float)
    return np.abs(np.sin(phi / 2)) if system == "derived" else np.abs(np.sin(phi))


def closed_form_literal(r12, r21, phi) -> tuple[np.ndarray, np.ndarray]:
    """U = ((1+cos)R12 + sin R21)/sin,  V = ((-1+sin)R12 + (1-cos)R21)/sin, verbatim."""
    c, s = np.cos(phi), np.sin(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        return ((1 + c) * r12 + s * r21) / s, ((-1 + s) * r12 + (1 - c) * r21) / s


def closed_form_derived(r12, r21, phi) -> tuple[np.ndarray, np.ndarray]:
    """U = R12/2 - cot(phi/2) R21/2,  V = -R21/2 - cot(phi/2) R12/2."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ct = 1.0 / np.tan(np.asarray(phi) / 2)
    return 0.5 * r12 - 0.5 * ct * r21, -0.5 * r21 - 0.5 * ct * r12


def _tikhonov(a: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """argmin |A x - r|^2 + lam |x|^2 for a stack of 2x2 systems."""
    at = np.swapaxes(a, -1, -2)
    lhs = at @ a + lam * np.eye(2)
    return np.linalg.solve(lhs, (at @ r[..., None]))[..., 0]


def uv_system(k_grid, phi, r12, r21, system: str = "derived", sin_floor: float = SIN_FLOOR,
              tikhonov: float = TIKHONOV) -> UVSystem:
    """Solve for U, V; samples with degeneracy <= sin_floor are flagged and solved by Tikhonov."""
    if system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}")
    k = np.asarray(k_grid, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r12 = np.asarray(r12, dtype=float)
    r21 = np.asarray(r21, dtype=float)
    if not (k.shape == phi.shape == r12.shape == r21.shape):
        raise InvalidDataError("k, phi, R12, R21 must be aligned")
    singular = degeneracy(phi, system) <= sin_floor
    if system == "literal_closed_form":
        u, v = closed_form_literal(r12, r21, phi)
    else:
        a = system_matrix(phi, system)
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (a[:, 1, 1] * r12 - a[:, 0, 1] * r21) / det
            v = (a[:, 0, 0] * r21 - a[:, 1, 0] * r12) / det
    if singular.any():
        warnings.warn(f"{int(singular.sum())} phase-singular k samples (degeneracy <= {sin_floor}); "
                      "solved with Tikhonov regularization", ScatteringWarning, stacklevel=2)
        a_s = system_matrix(phi[singular], "derived" if system == "derived" else "literal")
        sol = _tikhonov(a_s, np.stack([r12[singular], r21[singular]], axis=-1), tikhonov)
        u = u.copy()
        v = v.copy()
        u[singular], v[singular] = sol[:, 0], sol[:, 1]
    return UVSystem(k, phi, r12, r21, u, v, singular, system)


def uv_solve(r12, r21, phi, system: str = "derived", sin_floor: float = SIN_FLOOR,
             tikhonov: float = TIKHONOV) -> tuple[np.ndarray, np.ndarray]:
    """(U, V) from the R-terms and phase; see uv_system for the flagged version."""
    sys_ = uv_system(np.zeros(np.shape(phi)), phi, r12, r21, system, sin_floor, tikhonov)
    return sys_.u, sys_.v


def system_residual(sys_: UVSystem, system: Optional[str] = None) -> float:
    """max |A(phi)(U, V) - (R12, R21)| over non-singular samples (relative to max(1, |R|))."""
    system = system or ("literal" if sys_.system == "literal_closed_form" else sys_.system)
    ok = ~sys_.singular
    if not ok.any():
        return 0.0
    a = system_matrix(sys_.phi[ok], system)
    lhs = a @ np.stack([sys_.u[ok], sys_.v[ok]], axis=-1)[..., None]
    r = np.stack([sys_.r12[ok], sys_.r21[ok]], axis=-1)
    scale = max(1.0, float(np.max(np.abs(r))))
    return float(np.max(np.abs(lhs[..., 0] - r))) / scale


def _k_step(k: np.ndarray) -> float:
    return float(np.mean(np.diff(k))) if k.size > 1 else 1.0


@dataclass(frozen=True)
class BoundReport:
    margin_u: float
    margin_v: float
    constant: float
    gradient_share: float  # share of the |grad R| terms in the bound at its maximum


def bound_terms(sys_: UVSystem) -> tuple[np.ndarray, np.ndarray]:
    """(|R12| + |R21|, |grad R12| + |grad R21|) with k-gradients by 4th-order differences."""
    h = _k_step(sys_.k_grid)
    base = np.abs(sys_.r12) + np.abs(sys_.r21)
    grad = np.abs(fd4(sys_.r12, h)) + np.abs(fd4(sys_.r21, h))
    return base, grad


def uv_bound_check(sys_: UVSystem, constant: Optional[float] = None) -> BoundReport:
    """Margins max|U| / max(C (|R12| + |R21| + |grad R12| + |grad R21|)), same for V.

    A margin <= 1 means the estimate holds with constant C.
    """
    c = config.CALIBRATED_C if constant is None else float(constant)
    base, grad = bound_terms(sys_)
    total = base + grad
    denom = c * float(np.max(total))
    if denom == 0.0:
        mu = 0.0 if not np.any(sys_.u) else math.inf
        mv = 0.0 if not np.any(sys_.v) else math.inf
        return BoundReport(mu, mv, c, 0.0)
    i = int(np.argmax(total))
    share = float(grad[i] / total[i])
    return BoundReport(float(np.max(np.abs(sys_.u))) / denom, float(np.max(np.abs(sys_.v))) / denom, c, share)


def potential_sup_bound(i12, i21, k_grid, constant: Optional[float] = None) -> float:
    """C int (|I12| + |I21| + |grad I12| + |grad I21|) dk over the band (trapezoid)."""
    c = config.CALIBRATED_C if constant is None else float(constant)
    k = np.asarray(k_grid, dtype=float)
    i12 = np.asarray(i12, dtype=complex)
    i21 = np.asarray(i21, dtype=complex)
    h = _k_step(k)
    f = np.abs(i12) + np.abs(i21) + np.abs(fd4(i12, h)) + np.abs(fd4(i21, h))
    if f.size > 20 and f[-1] > 0.1 * np.max(f):
        warnings.warn("I-terms have not decayed at the band edge; the bound integral is truncated",
                      ScatteringWarning, stacklevel=2)
    return c * float(np.trapezoid(f, k))


# --- inverse transform of Q(k) --------------------------------------------------------------

def q_from_q2k(q2k, k_grid, grid: Grid) -> SampledFunction:
    """q(x) = (2/pi) Re int_0^K Q(k) exp(-2ikx) dk for a uniform k grid k_m = m dk, m >= 1.

    Q(0) is extrapolated from the lowest samples (Re Q is even in k).
    """
    k = np.asarray(k_grid, dtype=float)
    qk = np.asarray(q2k, dtype=complex)
    dk = _k_step(k)
    if abs(k[0] - dk) > 1e-6 * dk or np.max(np.abs(np.diff(k) - dk)) > 1e-6 * dk:
        raise InvalidDataError("inverse transform needs the aligned grid k_m = m dk, m = 1..n")
    # Re Q is even: interpolate a polynomial in k^2 through the first samples
    n0 = min(5, k.size)
    q0 = float(np.polynomial.polynomial.polyfit(k[:n0] ** 2, qk[:n0].real, n0 - 1)[0])
    kk = np.concatenate([[0.0], k])
    vals = np.concatenate([[q0], qk])
    w = np.full(kk.size, dk)
    w[0] = w[-1] = 0.5 * dk
    x = grid.x
    out = np.empty(x.size)
    for i in range(0, x.size, 512):
        blk = x[i:i + 512]
        out[i:i + 512] = (np.exp(-2j * np.outer(blk, kk)) @ (w * vals)).real * 2.0 / np.pi
    return SampledFunction(grid, out)


def aligned_k_grid(k_max: float, n_k: int) -> np.ndarray:
    dk = k_max / n_k
    return dk * np.arange(1, n_k + 1)


# --- representation iteration ------------------------------------------------------------

@dataclass
class IterationResult:
    q: SampledFunction
    converged: bool
    residual_history: list
    reason: str = ""
    singular_fraction: float = 0.0
    phi: Optional[np.ndarray] = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.q, self.converged, self.residual_history))


def phase_from_data(reflection_mod, B: BoundStateSet, k_grid, power: int = 2) -> np.ndarray:
    """phi = 2 arg s11 with s11 rebuilt from |s12| and the Blaschke product over B."""
    s11 = outer_factor(reflection_mod, k_grid, power=power) * blaschke_product(B, k_grid)
    return 2.0 * unwrap_from_top(np.angle(s11))


def q_representation_iterate(q0: Potential, B: BoundStateSet, tol: float = 1e-8, max_iter: int = 10,
                             k_grid=None, damping: float = DAMPING, reflection_mod=None,
                             sin_floor: float = SIN_FLOOR, reading: str = "derived",
                             system: str = "derived") -> IterationResult:
    """Fixed-point iteration q <- invFT(U + iV) with second-order I-terms from the current q.

    The phase is held fixed: phi from the Blaschke product over B times the
    outer factor of ``reflection_mod`` (|s12| data; by default that of q0).
    Each step is damped: q_{m+1} = q_m + damping (T(q_m) - q_m).  Stops when
    max|q_{m+1} - q_m| < tol; aborts on divergence (residual doubling over
    three iterations) and rejects data whose phase-singular set exceeds 20% of the band.
    """
    grid = q0.grid
    if k_grid is None:
        k_grid = aligned_k_grid(0.5 * grid.k_max, max(64, grid.N // 2))
    k = np.asarray(k_grid, dtype=float)
    if reflection_mod is None:
        # resolve the threshold: geometric refinement below the first grid point
        k_aux = np.concatenate([np.geomspace(min(1e-3, k[0] / 10), k[0], 48, endpoint=False), k])
        r_aux = np.abs(scattering_matrix(q0, k_aux).s12) if not q0.is_zero else np.zeros(k_aux.size)
        trivial = B.count == 0 and float(np.max(r_aux)) == 0.0
        phi = phase_from_data(r_aux, B, k_aux)[-k.size:]
    else:
        trivial = B.count == 0 and float(np.max(np.abs(reflection_mod))) == 0.0
        phi = phase_from_data(reflection_mod, B, k)
    singular = degeneracy(phi, system if system != "literal_closed_form" else "literal") <= sin_floor
    frac = float(singular.mean())
    # reflectionless data with no bound states is the spectrum of q = 0, not an inconsistency
    if frac > SINGULAR_ABORT and not trivial:
        raise InvalidDataError(f"phase-singular set covers {frac:.0%} of the band: data inconsistent with B")
    x, h = grid.x, grid.h
    q = q0.values.astype(float).copy()
    history: list[float] = []
    reason = "max_iter"
    converged = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScatteringWarning)
        for _ in range(max_iter):
            i12, i21 = born2_from_samples(q, x, h, k)
            r12, r21 = r_terms(i12, i21, phi, reading)
            sys_ = uv_system(k, phi, r12, r21, system, sin_floor)
            target = q_from_q2k(sys_.q2k, k, grid).values.real
            step = damping * (target - q)
            q = q + step
            res = float(np.max(np.abs(step)))
            history.append(res)
            if not np.isfinite(res):
                reason = "non-finite iterate"
                break
            if res < tol:
                converged, reason = True, "tol"
                break
            if len(history) >= 4 and history[-1] > 2 * history[-4]:
                reason = "diverging"
                break
    if reason in ("diverging", "non-finite iterate"):
        warnings.warn(f"representation iteration {reason}; aborted after {len(history)} steps",
                      ScatteringWarning, stacklevel=2)
    return IterationResult(SampledFunction(grid, q), converged, history, reason, frac, phi)


# --- catastrophe indicator ---------------------------------------------------------------

@dataclass(frozen=True)
class CatastropheIndicator:
    bound_count: int
    min_gap: float
    phase_jump_density: float
    sup_grad_proxy: float
    alarm: bool


def catastrophe_indicator(q: Potential, k_grid=None, gap_tol: float = GAP_TOL,
                          density_tol: float = DENSITY_TOL, B: Optional[BoundStateSet] = None
                          ) -> CatastropheIndicator:
    """Bound-state clustering and phase winding density of q, with an alarm flag.

    ``B`` may be supplied when the spectrum is already known (it is otherwise
    located by the Wronskian scan).
    """
    if q.is_zero:
        return CatastropheIndicator(0, math.inf, 0.0, 0.0, False)
    if k_grid is None:
        k_grid = np.linspace(0.01, min(40.0, 0.5 * q.grid.k_max), 400)
    k = np.asarray(k_grid, dtype=float)
    if B is None:
        B = bound_states(q)
    gap, close = spectrum_spacing(B, gap_tol)
    P = transmission_phase(scattering_matrix(q, k))
    winding = levinson_count(P)
    density = winding / float(k[-1] - k[0])
    dq = fd4(q.values, q.grid.h)
    alarm = bool(close or density > density_tol)
    return CatastropheIndicator(B.count, gap, density, float(np.max(np.abs(dq))), alarm)
