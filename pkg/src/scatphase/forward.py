"""Direct scattering for -psi'' + q psi = k^2 psi on the line.

Jost solutions are obtained by integrating the ODE inward from the edge of
the potential's support, where they are pure exponentials, with an adaptive
8th-order Runge-Kutta scheme.  Outside the support the solutions are written
down exactly.  Scattering coefficients follow from Wronskians at a matching
point; the labels follow the asymptotics

    psi_1 ~ e^{ikx} + s12 e^{-ikx}  (x -> -inf),   psi_1 ~ s11 e^{ikx}  (x -> +inf)
    psi_2 ~ s22 e^{-ikx}            (x -> -inf),   psi_2 ~ e^{-ikx} + s21 e^{ikx}  (x -> +inf)

so s11 = s22 is the transmission coefficient and s12 (s21) the reflection
coefficient for incidence from the left (right).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ScatteringWarning, SolverError
from .potential import Potential

RTOL = 1e-12
ATOL = 1e-14
K_MIN = 1e-3


@dataclass(frozen=True)
class JostSolution:
    k: complex
    side: str
    x: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    residual: float


@dataclass(frozen=True)
class ScatteringData:
    k_grid: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    delta: np.ndarray

    def __len__(self):
        return self.k_grid.size


@dataclass(frozen=True)
class BornSplit:
    k_grid: np.ndarray
    qhat2k: np.ndarray
    qhat_minus2k: np.ndarray
    i12: np.ndarray
    i21: np.ndarray


def _segments(q: Potential, x0: float, x1: float) -> list[float]:
    lo, hi = sorted((x0, x1))
    inner = sorted(b for b in q.breakpoints if lo < b < hi)
    if x1 < x0:
        inner = inner[::-1]
    return [x0, *inner, x1]


def _rhs_factory(q: Potential, k2: np.ndarray):
    n = k2.size

    def rhs(x, y):
        f = y[:n]
        return np.concatenate([y[n:], (q.func(np.array([x]))[0] - k2) * f])

    return rhs


def _integrate(q: Potential, k: np.ndarray, x0: float, x1: float, y0: np.ndarray, t_eval=None, dense=None):
    """Carry the state (f, f') for every k from x0 to x1; optionally record at t_eval.

    If ``dense`` is a list, (a, b, interpolant) triples are appended to it.
    """
    k2 = np.asarray(k, dtype=complex) ** 2
    rhs = _rhs_factory(q, k2)
    nodes = _segments(q, x0, x1)
    y = np.asarray(y0, dtype=complex)
    recorded_x, recorded_y = [], []
    for a, b in zip(nodes[:-1], nodes[1:]):
        if a == b:
            continue
        te = None
        if t_eval is not None:
            lo, hi = sorted((a, b))
            te = t_eval[(t_eval >= lo) & (t_eval <= hi)]
            te = np.sort(te)[::-1] if b < a else np.sort(te)
        if te is not None:
            te = np.append(te[te != b], b)
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=RTOL, atol=ATOL, t_eval=te,
                        dense_output=dense is not None)
        if not sol.success:
            raise SolverError(f"ODE integration failed on [{a}, {b}]: {sol.message} ({sol.t.size} steps)")
        if te is not None and te.size > 1:
            recorded_x.append(sol.t[:-1])
            recorded_y.append(sol.y[:, :-1])
        if dense is not None:
            dense.append((a, b, sol.sol))
        y = sol.y[:, -1]
    if t_eval is None:
        return y
    if recorded_x:
        return y, np.concatenate(recorded_x), np.concatenate(recorded_y, axis=1)
    return y, np.empty(0), np.empty((y.size, 0), dtype=complex)


def _plane_wave_state(k: np.ndarray, x: float, sign: int) -> np.ndarray:
    """(f, f') of exp(sign * i k x)."""
    e = np.exp(sign * 1j * k * x)
    return np.concatenate([e, sign * 1j * k * e])


def _free_propagate(k: complex, x_ref: float, f0: complex, g0: complex, x: np.ndarray):
    """Evaluate the free solution with data (f0, g0) at x_ref on points x."""
    d = x - x_ref
    if k == 0:
        return f0 + g0 * d, g0 * np.ones_like(d)
    c, s = np.cos(k * d), np.sin(k * d)
    return f0 * c + g0 * s / k, -f0 * k * s + g0 * c


def _matching_point(q: Potential) -> tuple[float, float, float]:
    lo, hi = q.support()
    return lo, hi, float(np.clip(0.0, lo, hi))


def jost_edge_states(q: Potential, k) -> tuple[np.ndarray, np.ndarray, float]:
    """States (f, f') of f_+ and f_- at the matching point for an array of k."""
    plus, minus, xm, sp, sm = jost_edge_states_scaled(q, k)
    return plus * sp, minus * sm, xm


def jost_edge_states_scaled(q: Potential, k):
    """Like jost_edge_states, but integrated from unit-modulus edge data.

    Returns ``(plus, minus, xm, scale_plus, scale_minus)``; the true states are
    ``plus * scale_plus`` and ``minus * scale_minus``.  For k = i*kappa the
    scales are positive reals that may be far below the integrator's absolute
    tolerance, which is why they are kept apart.
    """
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    n = k.size
    lo, hi, xm = _matching_point(q)
    sp = np.exp(1j * k * hi)
    sm = np.exp(-1j * k * lo)
    plus = _integrate(q, k, hi, xm, np.concatenate([np.ones(n), 1j * k]))
    minus = _integrate(q, k, lo, xm, np.concatenate([np.ones(n), -1j * k]))
    return plus.reshape(2, n), minus.reshape(2, n), xm, sp, sm


def wronskian(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """W(f, g) = f g' - f' g for states stacked as (value, derivative)."""
    return a[0] * b[1] - a[1] * b[0]


def jost_wronskian(q: Potential, k) -> np.ndarray:
    """W(f_-, f_+)(k); equals 2ik for q = 0 and vanishes at bound states k = i kappa."""
    plus, minus, _ = jost_edge_states(q, k)
    return wronskian(minus, plus)


def jost_wronskian_normalized(q: Potential, k) -> np.ndarray:
    """W(f_-, f_+)(k) divided by exp(ik(hi - lo)), with [lo, hi] the potential's support.

    For k = i*kappa the divisor is a positive real, so signs and zeros are
    those of the true Wronskian while the magnitude stays O(1).
    """
    plus, minus, _, _, _ = jost_edge_states_scaled(q, k)
    return wronskian(minus, plus)


def jost_solve(q: Potential, k: complex, side: str = "plus") -> JostSolution:
    """Jost solution f_+(k, x) (side='plus') or f_-(k, x) on the potential's grid."""
    k = complex(k)
    if k.imag < 0:
        raise ValueError(f"Jost solutions are defined for Im k >= 0, got k={k}")
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    x = q.grid.x
    lo, hi = q.support()
    sign = 1 if side == "plus" else -1
    start, end = (hi, lo) if side == "plus" else (lo, hi)
    f = np.empty(x.size, dtype=complex)
    df = np.empty(x.size, dtype=complex)

    y0 = _plane_wave_state(np.array([k]), start, sign)
    inside = (x > lo) & (x < hi)
    if hi > lo:
        pieces = []
        yend, xs, ys = _integrate(q, np.array([k]), start, end, y0, t_eval=x[inside], dense=pieces)
        order = np.argsort(xs)
        f[inside] = ys[0][order]
        df[inside] = ys[1][order]
    else:
        yend, pieces = y0, []
    # exact continuation outside the support
    near = x >= hi if side == "plus" else x <= lo
    far = ~(near | inside)
    e = np.exp(sign * 1j * k * x[near])
    f[near], df[near] = e, sign * 1j * k * e
    f[far], df[far] = _free_propagate(k, end, yend[0], yend[1], x[far])
    res = _ode_residual(q, k, x[inside], pieces)
    return JostSolution(k, side, x, f, df, res)


def _ode_residual(q: Potential, k: complex, x: np.ndarray, pieces) -> float:
    """max over grid points of |f'' - (q - k^2) f|.

    f'' comes from 4th-order central differences of the integrator's dense
    output for f' on a local stencil of width ~ 0.002/(1+|k|), so the check
    resolves the solution independently of the grid spacing.  The residual
    is relative to max(1, max|f|), which matters for growing solutions at
    imaginary k.
    """
    delta = 0.002 / (1.0 + abs(k))
    worst = 0.0
    for a, b, sol in pieces:
        lo, hi = sorted((a, b))
        xs = x[(x > lo + 2 * delta) & (x < hi - 2 * delta)]
        if xs.size == 0:
            continue
        g = [sol(xs + j * delta)[1] for j in (-2, -1, 1, 2)]
        d2 = (g[0] - 8 * g[1] + 8 * g[2] - g[3]) / (12 * delta)
        f = sol(xs)[0]
        r = d2 - (q.func(xs) - k * k) * f
        worst = max(worst, float(np.max(np.abs(r)) / max(1.0, np.max(np.abs(f)))))
    return worst


def scattering_matrix(q: Potential, k_grid, k_min: float = K_MIN) -> ScatteringData:
    """s_ij(k) on a positive, increasing k grid (points below k_min are dropped with a warning)."""
    from .dispersion import unwrap_from_top

    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.ndim != 1 or k_grid.size == 0 or np.any(np.diff(k_grid) <= 0):
        raise ValueError("k_grid must be a non-empty strictly increasing 1-D array")
    low = k_grid < k_min
    if low.any():
        warnings.warn(
            f"{int(low.sum())} k points below k_min={k_min} excluded (singular threshold limit)",
            ScatteringWarning, stacklevel=2,
        )
        k_grid = k_grid[~low]
    if q.is_zero:
        one = np.ones(k_grid.size, dtype=complex)
        zero = np.zeros(k_grid.size, dtype=complex)
        return ScatteringData(k_grid, one, zero, zero.copy(), one.copy(), np.zeros(k_grid.size))
    plus, minus, _ = jost_edge_states(q, k_grid)
    two_ik = 2j * k_grid
    s11 = two_ik / wronskian(minus, plus)
    # f(-k, x) = conj f(k, x) for real q and real k
    s12 = s11 * wronskian(plus, minus.conj()) / two_ik
    s21 = -s11 * wronskian(minus, plus.conj()) / two_ik
    return ScatteringData(k_grid, s11, s12, s21, s11.copy(), unwrap_from_top(np.angle(s11)))


def unitarity_residual(S: ScatteringData) -> float:
    return float(np.max(np.abs(np.abs(S.s11) ** 2 + np.abs(S.s12) ** 2 - 1.0), initial=0.0))


def fourier_at(q: Potential, kappa) -> np.ndarray:
    """int q(x) exp(-i kappa x) dx by the grid rule at arbitrary real kappa."""
    x = q.grid.x
    v = q.values
    nz = v != 0
    if not nz.any():
        return np.zeros(np.size(kappa), dtype=complex)
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    out = np.empty(kappa.size, dtype=complex)
    xs, vs = x[nz], v[nz]
    for i in range(0, kappa.size, 256):
        blk = kappa[i:i + 256]
        out[i:i + 256] = q.grid.h * np.exp(-1j * np.outer(blk, xs)) @ vs
    return out


def born_split(q: Potential, S: ScatteringData) -> BornSplit:
    """Split 2ik s12 = Q(k) + I12 and 2ik s21 = conj Q(k) + I21.

    Q(k) = int q e^{+2ikx} dx is the transform that matches the first Born
    term for left incidence; under this package's e^{-ikx} convention that is
    ``fft_forward(q)`` evaluated at -2k.
    """
    k = S.k_grid
    k_band = np.pi / q.grid.h
    if np.any(2 * k > k_band):
        warnings.warn(
            f"2k exceeds the resolved band {k_band:.3g} for {int(np.sum(2 * k > k_band))} points",
            ScatteringWarning, stacklevel=2,
        )
    q_plus = fourier_at(q, -2 * k)
    q_minus = fourier_at(q, 2 * k)
    i12 = 2j * k * S.s12 - q_plus
    i21 = 2j * k * S.s21 - q_minus
    return BornSplit(k, q_plus, q_minus, i12, i21)


def second_order_born(q: Potential, k) -> tuple[np.ndarray, np.ndarray]:
    """Second-order Born parts of I12 and I21.

    I12 ~ (1/ik) int q(x) e^{2ikx} int_{-inf}^x q  and
    I21 ~ (1/ik) int q(x) e^{-2ikx} int_x^{inf} q.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return born2_from_samples(q.values, q.grid.x, q.grid.h, k)


def born2_from_samples(v, x, h: float, k) -> tuple[np.ndarray, np.ndarray]:
    """second_order_born on raw real samples v(x) with step h."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    v = np.asarray(v, dtype=float)
    # trapezoid running integrals
    left = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
    right = left[-1] - left
    i12 = np.empty(k.size, dtype=complex)
    i21 = np.empty(k.size, dtype=complex)
    for i in range(0, k.size, 256):
        blk = k[i:i + 256]
        ph = np.exp(2j * np.outer(blk, x))
        i12[i:i + 256] = h * (ph @ (v * left)) / (1j * blk)
        i21[i:i + 256] = h * (ph.conj() @ (v * right)) / (1j * blk)
    return i12, i21
