import numpy as np
import pytest

from scatphase.numgrid import Grid
from scatphase.potential import sech2, square_well, zero
from scatphase.spectrum import BoundStateSet, bound_states, norming_constants, spectrum_spacing
from scatphase.forward import jost_wronskian_normalized


def test_zero_has_no_states(grid12):
    assert bound_states(zero(grid12)).count == 0
    assert norming_constants(zero(grid12), BoundStateSet.empty()).count == 0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sech2_family(m, grid12):
    q = sech2(grid12, m=m)
    B = bound_states(q)
    assert B.count == m
    assert np.max(np.abs(B.kappas - np.arange(1, m + 1))) < 1e-8
    w = jost_wronskian_normalized(q, 1j * B.kappas)
    scale = np.max(np.abs(jost_wronskian_normalized(q, 1j * np.linspace(0.1, m + 0.5, 50))))
    assert np.max(np.abs(w)) < 1e-8 * scale


def test_norming_constants_solitons(grid12):
    B = norming_constants(sech2(grid12, m=1), bound_states(sech2(grid12, m=1)))
    assert abs(B.norming[0] - 2.0) < 1e-6
    B2 = norming_constants(sech2(grid12, m=2), bound_states(sech2(grid12, m=2)))
    assert np.allclose(B2.norming, [6.0, 12.0], rtol=1e-6)


def test_norming_grid_refinement():
    vals = []
    for g in (Grid(12.0, 512), Grid(12.0, 1024), Grid(16.0, 2048)):
        q = square_well(g, depth=2.0)
        vals.append(norming_constants(q, bound_states(q)).norming)
    assert np.max(np.abs(vals[1] / vals[0] - 1)) < 1e-4
    assert np.max(np.abs(vals[2] / vals[0] - 1)) < 1e-4


def test_count_monotone_in_depth(grid12):
    counts = [bound_states(square_well(grid12, depth=d)).count for d in np.linspace(0.5, 12, 12)]
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_norming_continuous_across_birth(grid12):
    # the second state of a square well appears at depth (pi/2)^2 / (half width)^2 ~ 2.467
    ds = np.linspace(2.6, 3.4, 9)
    m = []
    for d in ds:
        q = square_well(grid12, depth=d)
        B = norming_constants(q, bound_states(q))
        assert B.count == 2
        m.append(B.norming)
    m = np.array(m)
    d1 = np.diff(m, axis=0)
    d2 = np.diff(m, 2, axis=0)
    # smooth in depth: second differences small against first differences
    assert np.all(np.isfinite(m)) and np.max(np.abs(d2)) < 0.2 * np.max(np.abs(d1))
    assert m[0, 0] < 0.1  # the newborn state starts with a small norming constant


def test_spacing():
    assert spectrum_spacing(BoundStateSet.empty()) == (np.inf, False)
    assert spectrum_spacing(BoundStateSet(np.array([1.0, 2.0]))) == (1.0, False)
    acc = BoundStateSet(np.array([1 - 2.0 ** -j for j in range(1, 11)]))
    gap, flag = spectrum_spacing(acc, 1e-2)
    assert flag and gap == 2.0 ** -10


def test_set_validation():
    with pytest.raises(ValueError):
        BoundStateSet(np.array([2.0, 1.0]))
    with pytest.raises(ValueError):
        BoundStateSet(np.array([1.0]), np.array([-1.0]))
