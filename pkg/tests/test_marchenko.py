import numpy as np
import pytest

from scatphase.errors import InvalidDataError
from scatphase.forward import scattering_matrix
from scatphase.marchenko import (MarchenkoKernel, a_plus_from_reflection, accumulation_demo, build_kernel,
                                 first_approx_potential, kernel_from_scattering, kernel_t_grid,
                                 reflection_from_a_plus, solve_marchenko, soliton_profile)
from scatphase.numgrid import Grid
from scatphase.potential import gaussian_well, square_well
from scatphase.spectrum import BoundStateSet, bound_states, norming_constants

G = Grid(10.0, 512)
KB = np.linspace(0.01, 40.0, 800)


def sech2_closed(kappa, m, x):
    x0 = np.log(m / (2 * kappa)) / (2 * kappa)
    return -2 * kappa ** 2 / np.cosh(kappa * (x - x0)) ** 2


def test_zero_kernel():
    t = kernel_t_grid(G)
    K = build_kernel(BoundStateSet.empty(), t)
    assert not np.any(K.omega)
    assert not np.any(a_plus_from_reflection(np.zeros(KB.size), KB, t))
    sol = solve_marchenko(K, G)
    assert not np.any(sol.q.values) and not np.any(sol.diagonal)
    assert not np.any(first_approx_potential(K, G).values)


@pytest.mark.parametrize("kappa,m", [(1.0, 2.0), (0.7, 0.3), (1.5, 12.0)])
def test_single_soliton(kappa, m):
    K = build_kernel(BoundStateSet(np.array([kappa]), np.array([m])), kernel_t_grid(G))
    q = solve_marchenko(K, G).q.values.real
    assert np.max(np.abs(q - sech2_closed(kappa, m, G.x))) < 1e-4
    assert np.allclose(soliton_profile(kappa, m, G.x), sech2_closed(kappa, m, G.x))


def test_soliton_nystrom_path():
    K = build_kernel(BoundStateSet(np.array([1.0]), np.array([2.0])), kernel_t_grid(G))
    sol = solve_marchenko(K, G, method="nystrom")
    assert np.max(np.abs(sol.q.values.real - sech2_closed(1.0, 2.0, G.x))) < 1e-4
    assert sol.residual < 1e-8


def test_two_soliton_matches_sech2():
    # -6 sech^2 x has kappa = 1, 2 with M = 6, 12
    K = build_kernel(BoundStateSet(np.array([1.0, 2.0]), np.array([6.0, 12.0])), kernel_t_grid(G))
    q = solve_marchenko(K, G).q.values.real
    assert np.max(np.abs(q + 6 / np.cosh(G.x) ** 2)) < 1e-8


def test_rational_reflection_oracle():
    # i gamma/(k - i beta)^3 <-> gamma t^2 e^{-beta t}/2 for t > 0 (residue calculus)
    k = np.linspace(0.005, 400, 80000)
    t = np.linspace(-5, 20, 501)
    a = a_plus_from_reflection(1j / (k - 1j) ** 3, k, t)
    exact = np.where(t > 0, t ** 2 * np.exp(-t) / 2, 0.0)
    assert np.max(np.abs(a - exact)) < 1e-6


def test_transform_roundtrip():
    q = gaussian_well(Grid(12.0, 1024), depth=-1.0)
    S = scattering_matrix(q, KB)
    t = np.linspace(-40, 60, 4001)
    a = a_plus_from_reflection(S.s21, KB, t)
    back = reflection_from_a_plus(a, t, KB)
    band = KB >= 0.2
    assert np.max(np.abs(back[band] - S.s21[band])) < 1e-4


def test_gaussian_roundtrip():
    q = gaussian_well(G)
    S = scattering_matrix(q, KB)
    B = norming_constants(q, bound_states(q))
    sol = solve_marchenko(kernel_from_scattering(S.s21, KB, B, G), G)
    assert np.max(np.abs(sol.q.values.real - q.values)) < 1e-3


def test_barrier_roundtrip():
    q = gaussian_well(G, depth=-1.0)
    S = scattering_matrix(q, KB)
    sol = solve_marchenko(kernel_from_scattering(S.s21, KB, BoundStateSet.empty(), G), G)
    assert np.max(np.abs(sol.q.values.real - q.values)) < 1e-3


def test_square_well_roundtrip_gibbs():
    # a discontinuous potential is recovered up to band-limited overshoot at the jumps
    q = square_well(G, depth=0.5)
    S = scattering_matrix(q, KB)
    B = norming_constants(q, bound_states(q))
    rec = solve_marchenko(kernel_from_scattering(S.s21, KB, B, G), G).q.values.real
    away = np.abs(np.abs(G.x) - 1.0) > 0.5
    assert np.max(np.abs(rec - q.values)[away]) < 2e-2
    assert np.max(np.abs(rec - q.values)) < 0.25


def test_kernel_step_mismatch():
    K = build_kernel(BoundStateSet(np.array([1.0]), np.array([2.0])), np.linspace(-20, 40, 301))
    K = MarchenkoKernel(K.t_grid, K.omega + 1e-3, K.discrete_part, K.continuous_part + 1e-3, K.kappas, K.norming)
    with pytest.raises(InvalidDataError):
        solve_marchenko(K, G, method="nystrom")


def test_first_approx_single_exponential():
    K = build_kernel(BoundStateSet(np.array([1.0]), np.array([2.0])), kernel_t_grid(G))
    q1 = first_approx_potential(K, G).values.real
    assert np.allclose(q1, -4 * 1.0 * 2.0 * np.exp(-2 * G.x), rtol=1e-12)


def test_first_approx_quadratic():
    q = gaussian_well(G, depth=-1.0)
    S = scattering_matrix(q, KB)
    K = kernel_from_scattering(S.s21, KB, BoundStateSet.empty(), G)
    errs = []
    for eps in (1e-3, 5e-4):
        Ke = K.scaled(eps)
        errs.append(np.max(np.abs(first_approx_potential(Ke, G).values - solve_marchenko(Ke, G).q.values)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_accumulation_rows():
    g = Grid(60.0, 4096)
    rows = accumulation_demo(lambda j: 1 - 2.0 ** -j, [1, 2, 4, 8], g)
    assert [r["n"] for r in rows] == [1, 2, 4, 8]
    assert abs(rows[0]["sup_q"] - 0.5) < 1e-8  # kappa = 1/2 soliton: 2 kappa^2
    sup_dq = [r["sup_dq"] for r in rows]
    assert all(b > a for a, b in zip(sup_dq, sup_dq[1:]))
    assert rows[-1]["min_gap"] < rows[1]["min_gap"]
    assert rows[-1]["alarm"] and not rows[1]["alarm"]
    # int q^2 = (16/3) sum kappa^3 for reflectionless potentials
    for r, n in zip(rows, [1, 2, 4, 8]):
        kap = np.array([1 - 2.0 ** -j for j in range(1, n + 1)])
        assert abs(r["l2_norm"] ** 2 - 16 / 3 * np.sum(kap ** 3)) < 1e-6 * r["l2_norm"] ** 2
    with pytest.raises(ValueError):
        accumulation_demo([0.5, 0.75], [2, 1], g)
