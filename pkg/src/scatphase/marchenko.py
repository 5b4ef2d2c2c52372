"""Marchenko inversion: kernel assembly, Nystrom solve, first approximation.

Right-side form used throughout::

    K(x, y) + F(x + y) + int_x^inf K(x, s) F(s + y) ds = 0,   y >= x
    F(t) = sum_j M_j exp(-kappa_j t) + A(t),   A(t) = (1/2pi) int s21(k) exp(ikt) dk
    q(x) = -2 d/dx K(x, x)

With y = x + u the unknown K(x, x + u) depends on F only through 2x + u + v,
so each x gives a Hankel-type system.  Past the point T where A has decayed,
F is a finite sum of exponentials and K(x, x + u) is exactly exponential in u;
that tail is folded into the system analytically (a few extra unknowns), so
the dense part only spans [0, T - 2x].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidDataError, ScatteringWarning, SolverError
from .numgrid import Grid, SampledFunction, fd4, spectral_derivative
from .spectrum import BoundStateSet, spectrum_spacing

MARCHENKO_TOL = 1e-8
TAIL_REL = 1e-8
BAND_TOL = 1e-3


@dataclass(frozen=True)
class MarchenkoKernel:
    """F(t) = discrete_part + continuous_part on a uniform t grid.

    ``kappas``/``norming`` define the discrete part analytically, which the
    solver uses past the end of the tabulated continuous part.
    """

    t_grid: np.ndarray
    omega: np.ndarray
    discrete_part: np.ndarray
    continuous_part: np.ndarray
    kappas: np.ndarray = field(default_factory=lambda: np.empty(0))
    norming: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def step(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def is_separable(self) -> bool:
        return not np.any(self.continuous_part)

    def discrete(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for kap, m in zip(self.kappas, self.norming):
            out += m * np.exp(-kap * t)
        return out

    def scaled(self, eps: float) -> "MarchenkoKernel":
        """The kernel eps * F (both parts scaled)."""
        return MarchenkoKernel(self.t_grid, eps * self.omega, eps * self.discrete_part,
                               eps * self.continuous_part, self.kappas, eps * self.norming)


def _uniform_from_zero(k: np.ndarray, values: np.ndarray, dk: float) -> tuple[np.ndarray, np.ndarray]:
    """Resample s21 onto 0, dk, 2dk, ... K.

    Splines are fitted to the mirrored data (Re even, Im odd, from
    s21(-k) = conj s21(k)) so the threshold gap is bridged smoothly.
    """
    kk = np.concatenate([-k[::-1], k])
    re = CubicSpline(kk, np.concatenate([values.real[::-1], values.real]))
    im = CubicSpline(kk, np.concatenate([-values.imag[::-1], values.imag]))
    n = int(math.floor(k[-1] / dk + 1e-9))
    ku = dk * np.arange(n + 1)
    return ku, re(ku) + 1j * im(ku)


def a_plus_from_reflection(s21_data, k_grid, t_grid, dk: Optional[float] = None,
                           band_tol: float = BAND_TOL) -> np.ndarray:
    """A(t) = (1/2pi) int s21(k) e^{ikt} dk = (1/pi) Re int_0^K s21(k) e^{ikt} dk.

    Trapezoid rule on a uniform grid from k = 0 (s21 resampled there by cubic
    splines when the input grid is not of that form).
    """
    r = np.asarray(s21_data, dtype=complex)
    k = np.asarray(k_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if r.shape != k.shape or k.size < 4 or np.any(k <= 0) or np.any(np.diff(k) <= 0):
        raise InvalidDataError("s21 data must be given on a positive increasing k grid (>= 4 points)")
    if not np.any(r):
        return np.zeros(t.shape)
    tail = float(np.abs(r[-1]) / np.max(np.abs(r)))
    if tail > band_tol:
        warnings.warn(f"|s21| at the top of the band is {tail:.2e} of its peak: A(t) truncated",
                      ScatteringWarning, stacklevel=2)
    if dk is None:
        dk = float(np.min(np.diff(k)))
        span = float(np.ptp(t)) if t.size > 1 else 0.0
        if span > 0:
            dk = min(dk, np.pi / span)  # aliasing period 2pi/dk must exceed the t span
    ku, ru = _uniform_from_zero(k, r, dk)
    w = np.full(ku.size, dk)
    w[0] = w[-1] = 0.5 * dk
    out = np.empty(t.size)
    for i in range(0, t.size, 512):
        blk = t[i:i + 512]
        out[i:i + 512] = (np.exp(1j * np.outer(blk, ku)) @ (w * ru)).real / np.pi
    return out


def reflection_from_a_plus(a_plus, t_grid, k) -> np.ndarray:
    """int A(t) e^{-ikt} dt by the trapezoid rule (inverse of a_plus_from_reflection)."""
    t = np.asarray(t_grid, dtype=float)
    a = np.asarray(a_plus, dtype=float)
    w = np.full(t.size, t[1] - t[0])
    w[0] = w[-1] = 0.5 * (t[1] - t[0])
    return np.exp(-1j * np.outer(np.asarray(k, dtype=float), t)) @ (w * a)


def build_kernel(B: BoundStateSet, t_grid, a_plus=None) -> MarchenkoKernel:
    """Kernel from bound states (with norming constants) and an optional sampled A(t)."""
    t = np.asarray(t_grid, dtype=float)
    if t.size < 2 or np.any(np.abs(np.diff(t) - (t[1] - t[0])) > 1e-9 * max(1.0, abs(t[1] - t[0]))):
        raise InvalidDataError("t grid must be uniform")
    if B.count and B.norming is None:
        raise InvalidDataError("bound states need norming constants to build the kernel")
    kap = B.kappas if B.count else np.empty(0)
    mj = B.norming if B.count else np.empty(0)
    disc = np.zeros(t.size)
    for k_, m_ in zip(kap, mj):
        disc += m_ * np.exp(-k_ * t)
    cont = np.zeros(t.size) if a_plus is None else np.asarray(a_plus, dtype=float)
    if cont.shape != t.shape:
        raise InvalidDataError("A(t) samples do not match the t grid")
    return MarchenkoKernel(t, disc + cont, disc, cont, np.array(kap, float), np.array(mj, float))


def kernel_t_grid(grid: Grid, extra: float = 0.0) -> np.ndarray:
    """t = 2x + (i + l) h lattice covering every argument the solver needs on ``grid``."""
    h = grid.h
    t0 = -2.0 * grid.L
    t1 = 2.0 * (grid.L - h) + extra
    return t0 + h * np.arange(int(round((t1 - t0) / h)) + 1)


def kernel_from_scattering(s21, k_grid, B: BoundStateSet, grid: Grid, extra: float = 20.0) -> MarchenkoKernel:
    t = kernel_t_grid(grid, extra)
    return build_kernel(B, t, a_plus_from_reflection(s21, k_grid, t))


@dataclass(frozen=True)
class MarchenkoSolution:
    x: np.ndarray
    diagonal: np.ndarray          # K(x, x)
    q: SampledFunction
    residual: float               # worst relative residual of the linear systems
    method: str
    kernels: dict = field(default_factory=dict, compare=False)  # x -> K(x, x + u) samples, if requested


_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
_NEWTON_COTES = {
    3: np.array([1.0, 4.0, 1.0]) / 3.0,
    4: np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 / 8.0,
    5: np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * 2.0 / 45.0,
}


def _weights(n: int, h: float, quadrature: str = "gregory") -> np.ndarray:
    """Trapezoid weights on n nodes, optionally with 4th-order Gregory end corrections."""
    if n == 1:
        return np.zeros(1)
    w = np.full(n, h)
    if quadrature == "gregory" and n >= 6:
        w[:3] = h * _GREGORY
        w[-3:] = h * _GREGORY[::-1]
    elif quadrature == "gregory" and n >= 3:
        # short intervals: closed Newton-Cotes of matching order
        w = h * _NEWTON_COTES[n]
    else:
        w[0] = w[-1] = 0.5 * h
    return w


SUBSET_MAX = 12  # pure-discrete kernels up to this size use the positive subset expansion


def _separable(kap: np.ndarray, m: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """K(x, x) = (ln det(I + C))' and q = -2 (ln det(I + C))'' for a pure-exponential kernel.

    C_jl = sqrt(M_j M_l) exp(-(kappa_j + kappa_l) x)/(kappa_j + kappa_l).  The
    determinant is expanded in principal minors (Cauchy determinants)::

        det(I + C) = sum_S w_S exp(-2 x kappa_S),
        w_S = prod_{j in S} M_j/(2 kappa_j) prod_{i<j in S} ((kappa_i - kappa_j)/(kappa_i + kappa_j))^2

    All terms are positive, so with p_S the normalized terms,
    (ln det)' = -E_p[2 kappa_S] and (ln det)'' = Var_p[2 kappa_S] without
    cancellation, even for clustered kappa where C is numerically singular.
    Returns (diagonal, q, worst condition of I + C) -- the latter for reporting only.
    """
    n = kap.size
    if n > SUBSET_MAX:
        return _separable_matrix(kap, m, x)
    masks = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    logw = masks @ np.log(m / (2 * kap))
    with np.errstate(divide="ignore"):
        pair = 2 * np.log(np.abs(kap[:, None] - kap[None, :]) / (kap[:, None] + kap[None, :]))
    pair = np.triu(pair, 1)
    logw += np.einsum("si,ij,sj->s", masks.astype(float), pair, masks.astype(float))
    two_s = 2 * (masks @ kap)
    diag = np.empty(x.size)
    q = np.empty(x.size)
    for i in range(0, x.size, 256):
        xs = x[i:i + 256]
        logits = logw[None, :] - xs[:, None] * two_s[None, :]
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        mean = p @ two_s
        var = np.einsum("xs,xs->x", p, (two_s[None, :] - mean[:, None]) ** 2)
        diag[i:i + 256] = -mean
        q[i:i + 256] = -2.0 * var
    g = np.sqrt(np.outer(m, m)) / (kap[:, None] + kap[None, :])
    e = np.exp(-kap * x.min())
    cond = 1.0 + float(np.max(np.linalg.eigvalsh(g * np.outer(e, e))))
    return diag, q, cond


def _separable_matrix(kap: np.ndarray, m: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Same quantities from explicit inverses of I + C (many bound states)."""
    s = kap[:, None] + kap[None, :]
    g = np.sqrt(np.outer(m, m)) / s
    diag = np.empty(x.size)
    q = np.empty(x.size)
    worst_cond = 1.0
    eye = np.eye(kap.size)
    for i, xi in enumerate(x):
        e = np.exp(-kap * xi)
        c = g * np.outer(e, e)
        d = eye + c
        try:
            dinv = np.linalg.inv(d)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular Marchenko matrix at x={xi:.6g} "
                              f"(condition {np.linalg.cond(d):.3e})") from exc
        c1 = -s * c
        c2 = s * s * c
        pm = dinv @ c1
        diag[i] = np.trace(pm)
        q[i] = -2.0 * (np.trace(dinv @ c2) - np.trace(pm @ pm))
        worst_cond = max(worst_cond, float(np.linalg.cond(d)))
    if worst_cond > 1e14:
        warnings.warn(f"Marchenko matrix condition up to {worst_cond:.2e}: recovered q loses accuracy",
                      ScatteringWarning, stacklevel=3)
    return diag, q, worst_cond


def _tail_start(K: MarchenkoKernel, tail_rel: float) -> tuple[float, bool]:
    """(T, closure): past T either F itself or its continuous part is negligible.

    Negligible means below ``tail_rel`` times max(max|A|, sum M_j), a scale
    that ignores the exponential growth of the discrete part at t < 0.
    """
    t = K.t_grid
    scale = max(float(np.max(np.abs(K.continuous_part))), float(np.sum(K.norming)))
    if scale == 0.0:
        return float(t[0]), False
    thr = tail_rel * scale

    def settle(v):
        above = np.nonzero(np.abs(v) > thr)[0]
        if not above.size:
            return float(t[0])
        if above[-1] + 1 >= t.size:
            return math.inf
        return float(t[above[-1] + 1])

    t_a = settle(K.continuous_part)
    t_f = settle(K.omega)
    if K.kappas.size and t_a < math.inf and t_a <= t_f:
        return t_a, True
    if t_f == math.inf:
        warnings.warn("kernel has not decayed inside its t grid; tail truncated at the grid end",
                      ScatteringWarning, stacklevel=3)
        return float(t[-1]), False
    return t_f, False


def solve_marchenko(K: MarchenkoKernel, x_grid: Grid, tol: float = MARCHENKO_TOL,
                    tail_rel: float = TAIL_REL, method: str = "auto",
                    keep_kernels: Sequence[float] = (), quadrature: str = "gregory") -> MarchenkoSolution:
    """Recover q on ``x_grid`` from the kernel.

    ``method`` is "separable" (exact, pure discrete data), "nystrom", or
    "auto" (separable when A vanishes).  The Nystrom path needs the kernel's
    t step to equal the grid step h; its weights are the trapezoid rule, with
    fourth-order Gregory end corrections unless ``quadrature="trapezoid"``.
    """
    x = x_grid.x
    h = x_grid.h
    if method == "auto":
        a_max = float(np.max(np.abs(K.continuous_part)))
        if K.kappas.size and 0.0 < a_max <= tail_rel * float(np.sum(K.norming)):
            warnings.warn(f"continuous kernel part (max {a_max:.2e}) below tail_rel; using the "
                          "pure-discrete solution", ScatteringWarning, stacklevel=2)
            K = build_kernel(BoundStateSet(K.kappas, K.norming), K.t_grid)
        method = "separable" if K.is_separable else "nystrom"
    if not np.any(K.omega) and not K.kappas.size:
        z = np.zeros(x.size)
        return MarchenkoSolution(x, z, SampledFunction(x_grid, z), 0.0, method)
    if method == "separable":
        if not K.is_separable:
            raise ValueError("separable method needs a kernel without continuous part")
        diag, q, _ = _separable(K.kappas, K.norming, x)
        return MarchenkoSolution(x, diag, SampledFunction(x_grid, q), 0.0, method)
    if method != "nystrom":
        raise ValueError(f"unknown method {method!r}")
    if abs(K.step - h) > 1e-9 * h:
        raise InvalidDataError(f"kernel t step {K.step} differs from grid step {h}")
    if quadrature not in ("gregory", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return _nystrom(K, x_grid, tol, tail_rel, keep_kernels, quadrature)


def _nystrom(K, x_grid, tol, tail_rel, keep_kernels, quadrature) -> MarchenkoSolution:
    x = x_grid.x
    h = x_grid.h
    t = K.t_grid
    T, closure = _tail_start(K, tail_rel)
    kap = K.kappas if closure else np.empty(0)
    nd = kap.size
    if closure:
        # keep T >= 0 so the tail coefficients M_j exp(-kappa_j tau) stay bounded by M_j
        T = max(T, 0.0)
        T = t[0] + h * math.ceil((T - t[0]) / h - 1e-9)
    # F on a lattice long enough for every 2x + u + v; exact exponentials (or zero) past T
    m_t = int(round((T - t[0]) / h))
    n_max = max(m_t - int(round((2 * x[0] - t[0]) / h)), 1)
    ext = t[0] + h * np.arange(max(m_t + 1, int(round((2 * x[-1] - t[0]) / h)) + 2 * n_max + 2))
    inside = np.arange(ext.size) <= m_t
    f_ext = np.zeros(ext.size)
    f_ext[inside] = np.interp(ext[inside], t, K.omega)
    if closure:
        f_ext[~inside] = K.discrete(ext[~inside])
    ssum = kap[:, None] + kap[None, :]
    diag = np.empty(x.size)
    worst = 0.0
    kept = {}
    keep_idx = {int(np.argmin(np.abs(x - xk))): xk for xk in keep_kernels}
    for i, xi in enumerate(x):
        j2 = int(round((2 * xi - t[0]) / h))          # index of t = 2x
        n = max(m_t - j2, 0) + 1                       # nodes u = 0 .. (n-1) h
        idx = j2 + np.arange(n)[:, None] + np.arange(n)[None, :]
        w = _weights(n, h, quadrature)
        a_mat = np.eye(n + nd)
        a_mat[:n, :n] += f_ext[idx] * w[None, :]
        rhs = np.zeros(n + nd)
        rhs[:n] = -f_ext[j2 + np.arange(n)]
        if nd:
            # past u = U: K(x, x + v) = -sum_m c_m exp(-kappa_m (v - U)); tau = 2x + U >= T
            u = h * np.arange(n)
            tau = t[0] + h * (j2 + n - 1)
            b = K.norming * np.exp(-kap * tau)
            G = 1.0 / ssum
            eu = np.exp(-np.outer(u, kap))                     # n x nd
            a_mat[:n, n:] = -(eu * b[None, :]) @ G
            # coefficient of exp(-kappa_j (v - U)) in the equation for v >= U
            a_mat[n:, :n] = b[:, None] * np.exp(-np.outer(kap, u)) * w[None, :]
            a_mat[n:, n:] = -np.eye(nd) - (b * np.exp(-kap * u[-1]))[:, None] * G
            rhs[n:] = -b
        try:
            sol = np.linalg.solve(a_mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular Marchenko system at x={xi:.6g} "
                              f"(condition {np.linalg.cond(a_mat):.3e})") from exc
        res = np.linalg.norm(a_mat @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res > tol:
            raise SolverError(f"Marchenko residual {res:.2e} > {tol:.1e} at x={xi:.6g} "
                              f"(condition {np.linalg.cond(a_mat):.3e}): scattering data inconsistent")
        worst = max(worst, res)
        diag[i] = sol[0]
        if i in keep_idx:
            kept[keep_idx[i]] = sol[:n].copy()
    q = -2.0 * fd4(diag, h)
    return MarchenkoSolution(x, diag, SampledFunction(x_grid, q), worst, "nystrom", kept)


def first_approx_potential(K: MarchenkoKernel, x_grid: Grid, method: str = "auto") -> SampledFunction:
    """q1(x) = 2 d/dx F(2x): the recovery with the integral term dropped (K(x, x) ~ -F(2x)).

    The derivative operator matches solve_marchenko's for the chosen method,
    so differences between the two isolate the integral term.
    """
    x = x_grid.x
    if method == "auto":
        method = "separable" if K.is_separable else "nystrom"
    if method == "separable":
        q = np.zeros(x.size)
        for kap, m in zip(K.kappas, K.norming):
            q += -4.0 * kap * m * np.exp(-2 * kap * x)
        return SampledFunction(x_grid, q)
    f2x = np.interp(2 * x, K.t_grid, K.omega)
    return SampledFunction(x_grid, 2.0 * fd4(f2x, x_grid.h))


def soliton_profile(kappa: float, m: float, x) -> np.ndarray:
    """-2 kappa^2 sech^2(kappa (x - x0)), x0 = ln(M / 2 kappa)/(2 kappa)."""
    x0 = math.log(m / (2 * kappa)) / (2 * kappa)
    return -2 * kappa ** 2 / np.cosh(kappa * (np.asarray(x) - x0)) ** 2


def default_m_rule(kappa):
    return 2.0 * np.asarray(kappa, dtype=float)


def accumulation_demo(kappa_seq: Callable[[int], float] | Sequence[float], n_list: Sequence[int], grid: Grid,
                      m_rule: Callable = default_m_rule, gap_tol: float = 1e-2) -> list[dict]:
    """Pure-soliton potentials from the first n decay rates of a sequence with a limit point.

    One row per n: sup|q_n|, sup|q_n'| (spectral), ||q_n||_2, min spectral gap, alarm flag.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or not n_list or n_list[0] < 1:
        raise ValueError("n_list must be increasing positive integers")
    if callable(kappa_seq):
        kap_all = np.array([kappa_seq(j) for j in range(1, n_list[-1] + 1)], dtype=float)
    else:
        kap_all = np.asarray(kappa_seq, dtype=float)[: n_list[-1]]
    if kap_all.size < n_list[-1] or np.any(np.diff(kap_all) == 0):
        raise ValueError("kappa sequence too short or not strictly monotone")
    rows = []
    t = kernel_t_grid(grid)
    for n in n_list:
        kap = np.sort(kap_all[:n])
        B = BoundStateSet(kap, m_rule(kap))
        sol = solve_marchenko(build_kernel(B, t), grid)
        qn = sol.q
        dq = spectral_derivative(qn)
        gap, alarm = spectrum_spacing(B, gap_tol)
        rows.append({
            "n": n,
            "sup_q": float(np.max(np.abs(qn.values))),
            "sup_dq": float(np.max(np.abs(dq.values))),
            "l2_norm": qn.l2_norm(),
            "min_gap": gap,
            "alarm": bool(alarm),
        })
    return rows
