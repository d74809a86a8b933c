"""Truncated-shifted pair interactions.

Expected values are frozen from direct evaluation of the 12-6 form:
V_raw(r) = 4 eps ((sigma/r)^12 - (sigma/r)^6), shifted so V(r_cut) = 0.
"""

import numpy as np
import pytest

from olv.errors import ConfigInvalid, ZeroSeparation
from olv.geometry import RegionSpec, UniverseSpec
from olv.potentials import (
    IDEAL,
    LENNARD_JONES,
    WCA,
    PairPotentialSpec,
    dv_dr,
    pair_energy,
    pair_force,
    split_potential,
    total_potential,
)

LJ = PairPotentialSpec(kind=LENNARD_JONES)


def test_default_cutoff():
    assert LJ.r_cut == 2.5
    assert LJ.shift == pytest.approx(-0.016316891136, abs=1e-12)


def test_shifted_values():
    assert pair_energy(LJ, 1.0) == pytest.approx(0.016316891136, abs=1e-12)
    rmin = 2.0 ** (1.0 / 6.0)
    assert pair_energy(LJ, rmin) == pytest.approx(-0.98368310886400001,
                                                  abs=1e-12)
    assert pair_energy(LJ, 2.0) == pytest.approx(-0.045206546364, abs=1e-12)


def test_zero_beyond_cutoff():
    assert pair_energy(LJ, 2.5) == 0.0
    assert pair_energy(LJ, 3.7) == 0.0
    assert dv_dr(LJ, 2.6) == 0.0


def test_continuity_at_cutoff():
    assert pair_energy(LJ, 2.5 - 1e-9) == pytest.approx(0.0, abs=1e-7)


def test_zero_separation_raises():
    with pytest.raises(ZeroSeparation):
        pair_energy(LJ, 0.4)
    with pytest.raises(ZeroSeparation):
        dv_dr(LJ, 0.0)


def test_wca_form():
    wca = PairPotentialSpec(kind=WCA)
    rmin = 2.0 ** (1.0 / 6.0)
    assert wca.r_cut == pytest.approx(rmin)
    assert pair_energy(wca, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert pair_energy(wca, 1.05) == pytest.approx(0.24248808616372708,
                                                   abs=1e-12)
    assert pair_energy(wca, rmin) == 0.0
    assert pair_energy(wca, 1.2) == 0.0
    # purely repulsive
    for r in np.linspace(0.85, rmin - 1e-6, 40):
        assert pair_energy(wca, r) >= 0.0
        assert dv_dr(wca, r) <= 0.0


def test_wca_rejects_conflicting_cutoff():
    with pytest.raises(ConfigInvalid):
        PairPotentialSpec(kind=WCA, cutoff=2.5)


def test_ideal_is_zero_everywhere():
    gas = PairPotentialSpec(kind=IDEAL)
    assert pair_energy(gas, 0.7) == 0.0
    assert dv_dr(gas, 0.7) == 0.0
    assert np.allclose(pair_force(gas, np.array([0.3, 0.0, 0.0])), 0.0)


def test_dv_dr_matches_central_difference():
    h = 1e-6
    for r in (0.95, 1.1, 1.5, 2.0, 2.4):
        num = (pair_energy(LJ, r + h) - pair_energy(LJ, r - h)) / (2 * h)
        assert dv_dr(LJ, r) == pytest.approx(num, rel=1e-6, abs=1e-8)
    assert dv_dr(LJ, 1.5) == pytest.approx(1.1580288310461557, abs=1e-12)


def test_pair_force_direction_and_antisymmetry():
    rng = np.random.default_rng(3)
    for _ in range(25):
        rvec = rng.normal(0.0, 1.0, 3)
        rvec *= rng.uniform(0.9, 2.4) / np.linalg.norm(rvec)
        f_ij = pair_force(LJ, rvec)
        f_ji = pair_force(LJ, -rvec)
        assert np.allclose(f_ij, -f_ji, atol=1e-12)
        r = np.linalg.norm(rvec)
        # radial component equals -dV/dr
        assert f_ij @ (rvec / r) == pytest.approx(-dv_dr(LJ, r), rel=1e-10)
    # repulsive inside the minimum: force pushes the pair apart
    f = pair_force(LJ, np.array([1.0, 0.0, 0.0]))
    assert f[0] > 0.0
    f = pair_force(LJ, np.array([1.5, 0.0, 0.0]))
    assert f[0] < 0.0


def test_total_potential_three_particles():
    uni = UniverseSpec(box_lengths=(20.0, 20.0, 20.0), n_total=3)
    q = np.array([[5.0, 5.0, 5.0], [6.0, 5.0, 5.0], [30.0, 5.0, 5.0]])
    # third particle wraps to x=10, beyond cutoff from both others
    expect = pair_energy(LJ, 1.0)
    assert total_potential(LJ, q, uni) == pytest.approx(expect, abs=1e-12)


def test_total_potential_minimum_image():
    uni = UniverseSpec(box_lengths=(10.0, 10.0, 10.0), n_total=2)
    q = np.array([[0.5, 5.0, 5.0], [9.6, 5.0, 5.0]])
    # true separation through the seam is 0.9
    assert total_potential(LJ, q, uni) == pytest.approx(
        pair_energy(LJ, 0.9), abs=1e-12)


def test_split_potential_partition():
    uni = UniverseSpec(box_lengths=(10.0, 10.0, 10.0), n_total=4)
    reg = RegionSpec(omega_lo=(3.0, 3.0, 3.0), omega_hi=(7.0, 7.0, 7.0))
    q = np.array([
        [5.0, 5.0, 5.0],    # inside
        [6.0, 5.0, 5.0],    # inside
        [7.5, 5.0, 5.0],    # outside
        [8.5, 5.0, 5.0],    # outside
    ])
    v_in, v_out, v_cx = split_potential(LJ, q, uni, reg)
    assert v_in == pytest.approx(pair_energy(LJ, 1.0), abs=1e-12)
    assert v_out == pytest.approx(pair_energy(LJ, 1.0), abs=1e-12)
    # cross terms: (1,2) at 1.5, (1,3) at 2.5 (zero), (0,2) at 2.5 (zero),
    # (0,3) at 3.5 (zero)
    assert v_cx == pytest.approx(pair_energy(LJ, 1.5), abs=1e-12)
    total = total_potential(LJ, q, uni)
    assert v_in + v_out + v_cx == pytest.approx(total, abs=1e-12)
