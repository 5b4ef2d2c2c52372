import numpy as np
import pytest

from scatphase.forward import (born_split, jost_solve, jost_wronskian, scattering_matrix, second_order_born,
                               unitarity_residual)
from scatphase.potential import default_catalog, gaussian_well, sech2, square_well, zero


def square_well_exact(k, v0=0.5, a=1.0):
    """Transfer-matrix transmission and reflection of a square well of depth v0 on |x| < a."""
    kp = np.sqrt(k * k + v0)
    d = np.cos(2 * kp * a) - 0.5j * (kp / k + k / kp) * np.sin(2 * kp * a)
    t = np.exp(-2j * k * a) / d
    r = 0.5j * (kp / k - k / kp) * np.sin(2 * kp * a) * np.exp(-2j * k * a) / d
    return t, r


def test_jost_zero(grid12):
    f = jost_solve(zero(grid12), 1.0)
    assert np.max(np.abs(f.values - np.exp(1j * grid12.x))) == 0.0
    g = jost_solve(zero(grid12), 0.5j)
    assert np.allclose(g.values, np.exp(-0.5 * grid12.x), rtol=1e-14)
    with pytest.raises(ValueError):
        jost_solve(zero(grid12), -1j)


def test_jost_sech2_closed_form(grid12):
    q = sech2(grid12, m=1)
    x = grid12.x
    f = jost_solve(q, 1.0, "plus")
    exact = np.exp(1j * x) * (1 + 1j * np.tanh(x)) / (1 + 1j)
    assert np.max(np.abs(f.values - exact)) < 1e-6
    for k in (0.3, 1.0, 5.0):
        assert jost_solve(q, k).residual < 1e-8 * (1 + k * k)


def test_scattering_zero(kband, grid12):
    S = scattering_matrix(zero(grid12), kband)
    assert np.all(S.s11 == 1) and not np.any(S.s12)
    assert unitarity_residual(S) < 1e-14


def test_scattering_reflectionless(kband, grid12):
    S = scattering_matrix(sech2(grid12, m=1), kband)
    k = kband
    assert np.max(np.abs(S.s12)) < 1e-6
    assert np.max(np.abs(S.s11 - (k + 1j) / (k - 1j))) < 1e-6
    assert unitarity_residual(S) < 1e-6


def test_square_well_transfer_matrix(kband, grid12):
    S = scattering_matrix(square_well(grid12, depth=0.5), kband)
    t, r = square_well_exact(kband)
    assert np.max(np.abs(S.s11 - t)) < 1e-6
    # symmetric well: both reflections equal r
    assert np.max(np.abs(S.s12 - r)) < 1e-6
    assert np.max(np.abs(S.s21 - r)) < 1e-6
    assert unitarity_residual(S) < 1e-6


def test_unitarity_catalog(kband, grid12):
    for q in default_catalog(grid12):
        S = scattering_matrix(q, kband)
        assert unitarity_residual(S) < 1e-6, q.name
        # s11 s21* + s12 s22* = 0
        assert np.max(np.abs(S.s11 * np.conj(S.s21) + S.s12 * np.conj(S.s22))) < 1e-6, q.name


def test_symmetry_negative_k(grid12):
    q = gaussian_well(grid12)
    k = np.array([0.2, 0.7, 1.5, 4.0, 9.0])
    w = jost_wronskian(q, k)
    # the Wronskian at -k, from the minus-k solutions built by conjugation, is conj W(k)
    for kk, wk in zip(k, w):
        fp = jost_solve(q, kk, "plus")
        fm = jost_solve(q, kk, "minus")
        i = grid12.N // 2
        wneg = np.conj(fm.values[i]) * np.conj(fp.derivative[i]) - np.conj(fm.derivative[i]) * np.conj(fp.values[i])
        assert abs(wneg - np.conj(wk)) < 1e-6 * abs(wk)


def test_k_min_dropped(grid12):
    with pytest.warns(Warning):
        S = scattering_matrix(gaussian_well(grid12), np.array([1e-4, 0.5, 1.0]), k_min=1e-3)
    assert S.k_grid.size == 2


def test_born_split_zero(kband, grid12):
    q = zero(grid12)
    b = born_split(q, scattering_matrix(q, kband))
    assert not np.any(b.i12) and not np.any(b.i21)


def test_born_split_reflectionless(kband, grid12):
    q = sech2(grid12, m=1)
    b = born_split(q, scattering_matrix(q, kband))
    assert np.max(np.abs(b.i12 + b.qhat2k)) < 1e-5


@pytest.mark.parametrize("eps", [1e-3])
def test_born_remainder_second_order(eps, grid12, kband):
    base = gaussian_well(grid12)
    sups = []
    for e in (eps, eps / 2):
        q = base.scaled(e)
        b = born_split(q, scattering_matrix(q, kband))
        sups.append(np.max(np.abs(b.i12)))
    assert 3.5 <= sups[0] / sups[1] <= 4.5


def test_second_order_born_matches(grid12, kband):
    q = gaussian_well(grid12).scaled(1e-2)
    b = born_split(q, scattering_matrix(q, kband))
    i12, i21 = second_order_born(q, kband)
    hi = kband >= 0.5  # third order grows like eps/k towards threshold
    assert np.max(np.abs(i12 - b.i12)[hi]) < 0.05 * np.max(np.abs(b.i12[hi]))
    assert np.max(np.abs(i21 - b.i21)[hi]) < 0.05 * np.max(np.abs(b.i21[hi]))
