import numpy as np
import pytest

from scatphase.errors import GridError
from scatphase.numgrid import Grid
from scatphase.potential import Potential, builtin, default_catalog, gaussian_well, sech2, square_well, zero


def test_builtin_lookup(grid12):
    assert builtin("zero", grid12).is_zero
    q = builtin("gaussian_well", grid12, depth=2.0, width=0.5)
    assert q.params == {"depth": 2.0, "width": 0.5}
    assert np.isclose(q.values.min(), -2.0)
    with pytest.raises(ValueError):
        builtin("nope", grid12)


def test_sech2_parameters(grid12):
    assert np.isclose(sech2(grid12, m=2).values.min(), -6.0)
    assert np.isclose(sech2(grid12, depth=2.0).values.min(), -2.0)
    with pytest.raises(ValueError):
        sech2(grid12)
    with pytest.raises(ValueError):
        sech2(grid12, m=1, depth=2.0)


def test_tail_check():
    with pytest.raises(GridError):
        sech2(Grid(5.0, 256), m=1)
    with pytest.raises(GridError):
        Potential.from_samples(Grid(5.0, 64), np.ones(64))


def test_square_well_breakpoints(grid12):
    q = square_well(grid12, depth=0.5, half_width=1.0)
    assert q.breakpoints == (-1.0, 1.0)
    assert q.support()[0] <= -1.0 and q.support()[1] >= 1.0


def test_m_norm_and_scaling(grid12):
    q = gaussian_well(grid12)
    # int e^{-x^2}(1+|x|) = sqrt(pi) + 1; the kink of |x| costs ~ h^2/6 on the grid rule
    assert abs(q.m_norm - (np.sqrt(np.pi) + 1)) < grid12.h ** 2
    assert abs(q.scaled(0.5).m_norm - 0.5 * q.m_norm) < 1e-12
    assert np.allclose(q.scaled(0.5).func(np.array([0.3])), 0.5 * q.func(np.array([0.3])))


def test_from_samples_spline(grid12):
    q = gaussian_well(grid12)
    p = Potential.from_samples(grid12, q.values)
    xs = np.linspace(-3, 3, 37) + 0.01
    assert np.max(np.abs(p.func(xs) - q.func(xs))) < 1e-5


def test_default_catalog(grid12):
    names = [q.name for q in default_catalog(grid12)]
    assert names == ["zero", "gaussian_well", "square_well", "sech2", "sech2"]
    assert zero(grid12).support() == (0.0, 0.0)
