"""Estimator checks: occupancy law, boundary flux, conditional pairs,
and the mean boundary force against independently computed references."""

import numpy as np
import pytest
from scipy.stats import binom

from olv.engine import EngineConfig, ThermostatSpec, initial_ideal_gas, run
from olv.errors import (
    ConfigInvalid,
    EmptyConditioningBin,
    InconsistentLog,
    QuadratureNotConverged,
    TooFewSamples,
)
from olv.estimators import (
    ConditionalPairEstimate,
    FluxRecord,
    FromEstimate,
    MeanFieldForceTable,
    OccupancyHistogram,
    PairBinning,
    UniformDensity,
    estimate_f2_conditional,
    estimate_flux,
    estimate_pn,
    mean_field_force,
    normalization_check,
)
from olv.geometry import CrossingEvent, RegionSpec, UniverseSpec
from olv.potentials import IDEAL, LENNARD_JONES, WCA, PairPotentialSpec
from olv.rng import stream

LJ = PairPotentialSpec(kind=LENNARD_JONES)
WCA_POT = PairPotentialSpec(kind=WCA)


# ---------------------------------------------------------------------------
# occupancy law


def test_constant_occupancy_gives_delta_distribution():
    series = np.full(500, 3)
    hist = estimate_pn(series, stride=1)
    p = hist.probabilities()
    assert p[3] == 1.0
    assert p[:3].sum() == 0.0
    assert normalization_check(hist) == pytest.approx(1.0, abs=1e-12)


def test_binomial_occupancy_recovered():
    # Ideal-gas occupancy of a subdomain holding 10% of the volume is
    # Binomial(1000, 0.1); frozen reference pmf values from the closed
    # form.
    rng = np.random.default_rng(2024)
    series = rng.binomial(1000, 0.1, size=40_000)
    hist = estimate_pn(series, rng=np.random.default_rng(1))
    p = hist.probabilities()
    assert p[100] == pytest.approx(0.04201679086108606, rel=0.05)
    assert p[90] == pytest.approx(0.024834369629333535, rel=0.08)
    assert p[110] == pytest.approx(0.02348104151630459, rel=0.08)
    ref = binom.pmf(np.arange(p.size), 1000, 0.1)
    # Multinomial sampling noise alone gives L1 of about 0.03 at this
    # sample count, so 0.05 is a real shape check without flakiness.
    assert np.abs(p - ref).sum() < 0.05
    assert normalization_check(hist) == pytest.approx(1.0, abs=1e-12)
    # Bootstrap errors should sit near the multinomial scale.
    se = np.sqrt(ref[100] * (1 - ref[100]) / hist.total)
    assert hist.errors[100] == pytest.approx(se, rel=0.5)


def test_correlated_series_is_subsampled():
    rng = np.random.default_rng(7)
    base = rng.binomial(40, 0.3, size=3000)
    series = np.repeat(base, 8)  # 8-fold duplication: stride must grow
    hist = estimate_pn(series)
    assert hist.stride >= 8
    assert hist.mean() == pytest.approx(12.0, rel=0.05)
    assert hist.variance() == pytest.approx(40 * 0.3 * 0.7, rel=0.15)


def test_estimate_pn_rejects_short_or_invalid_series():
    with pytest.raises(TooFewSamples):
        estimate_pn(np.arange(8), stride=10)
    with pytest.raises(ConfigInvalid):
        estimate_pn(np.array([1, -1, 2, 1]), stride=1)
    with pytest.raises(ConfigInvalid):
        estimate_pn(np.array([1, 5, 2, 1]), stride=1, n_max=3)


def test_histogram_invariants_and_merge():
    with pytest.raises(ConfigInvalid):
        OccupancyHistogram(np.array([2, -1]), 1, 1)
    with pytest.raises(ConfigInvalid):
        OccupancyHistogram(np.array([2, 1]), 5, 1)
    a = OccupancyHistogram(np.array([1, 2, 3]), 6, 4)
    b = OccupancyHistogram(np.array([0, 1, 0, 5]), 6, 4)
    m = a.merge(b)
    assert m.total == 12
    assert np.array_equal(m.counts, [1, 3, 3, 5])
    with pytest.raises(ConfigInvalid):
        a.merge(OccupancyHistogram(np.array([1]), 1, 2))


# ---------------------------------------------------------------------------
# boundary flux


def test_no_events_gives_zero_rates():
    series = np.full(100, 5)
    rec = estimate_flux([], series, dt=0.01)
    assert rec.in_counts.sum() == 0 and rec.out_counts.sum() == 0
    assert rec.net_rate == 0.0
    assert np.all(rec.edge_net_rates == 0.0)


def test_flux_counts_attributed_per_occupancy():
    # n: 2 -> 3 -> 2 -> 2, with the last step containing an out-in pair.
    dt = 1.0
    series = np.array([2, 3, 2, 2])
    events = [
        CrossingEvent(0, "in", "x-", 0.5),
        CrossingEvent(1, "out", "y+", 1.5),
        CrossingEvent(2, "out", "z-", 2.2),
        CrossingEvent(3, "in", "x+", 2.7),
    ]
    rec = estimate_flux(events, series, dt)
    assert rec.in_counts[2] == 1   # 2 -> 3 entry
    assert rec.in_counts[1] == 1   # the mid-step 1 -> 2 re-entry
    assert rec.out_counts[2] == 1  # 3 -> 2 exit
    assert rec.out_counts[1] == 1  # 2 -> 1 exit
    assert rec.total_time == 3.0
    assert rec.net_rate == pytest.approx(0.0)


def test_inconsistent_log_detected():
    series = np.array([2, 3])
    with pytest.raises(InconsistentLog):
        estimate_flux([], series, dt=1.0)  # change without an event
    with pytest.raises(InconsistentLog):
        estimate_flux([CrossingEvent(0, "out", "x-", 0.5)], series, dt=1.0)
    with pytest.raises(InconsistentLog):
        estimate_flux([CrossingEvent(0, "in", "x-", 7.3)], series, dt=1.0)
    with pytest.raises(InconsistentLog):
        estimate_flux([CrossingEvent(0, "sideways", "x-", 0.5)],
                      series, dt=1.0)


def test_flux_record_merge():
    a = FluxRecord(np.array([1, 2]), np.array([0, 1]), 10.0)
    b = FluxRecord(np.array([0, 0, 3]), np.array([1, 1, 1]), 5.0)
    m = a.merge(b)
    assert np.array_equal(m.in_counts, [1, 2, 3])
    assert np.array_equal(m.out_counts, [1, 2, 1])
    assert m.total_time == 15.0
    assert m.net_rate == pytest.approx((6 - 4) / 15.0)


def test_effusion_rate_matches_kinetic_theory():
    # Ideal gas at rho = 0.1, T = 1: the one-sided crossing rate per
    # unit boundary area is rho * sqrt(T / (2 pi M)) = 0.0399.
    uni = UniverseSpec(box_lengths=(20.0, 20.0, 20.0), n_total=800,
                       temperature=1.0)
    reg = RegionSpec(omega_lo=(6.0, 6.0, 6.0), omega_hi=(14.0, 14.0, 14.0))
    cfg = EngineConfig(dt=0.05, steps=2000,
                       thermostat=ThermostatSpec(kind="off"), seed=3)
    init = initial_ideal_gas(uni, stream(3, "test.effusion"))
    res = run(uni, PairPotentialSpec(kind=IDEAL), cfg, init, region=reg)
    rec = estimate_flux(res.events, res.n_series, cfg.dt, t0=init.t,
                        rng=np.random.default_rng(5))
    area = 6 * 8.0 * 8.0
    per_area = rec.out_counts.sum() / rec.total_time / area
    assert per_area == pytest.approx(0.039894228040143274, rel=0.10)
    # Equilibrium: net rate consistent with zero at three bootstrap sigma.
    assert abs(rec.net_rate) < 3.0 * rec.net_error
    edges = rec.edge_net_rates.nonzero()[0]
    assert np.all(np.abs(rec.edge_net_rates[edges])
                  < 4.0 * rec.edge_net_errors[edges])


# ---------------------------------------------------------------------------
# conditional pair distribution


def _uniform_frames(n_frames, n, box, seed):
    rng = np.random.default_rng(seed)
    return [rng.uniform(0.0, box, size=(n, 3)) for _ in range(n_frames)]


def test_f2_conditional_flat_for_uniform_gas():
    # Uncorrelated uniform positions: in every separation bin lying
    # fully beyond the deepest conditioning depth (so it is outside the
    # subdomain for every conditioned particle), the observed
    # outer-particle density must equal the reservoir density, for
    # every conditioning slice alike.
    uni = UniverseSpec(box_lengths=(12.0, 12.0, 12.0), n_total=400)
    reg = RegionSpec(omega_lo=(3.0, 3.0, 3.0), omega_hi=(9.0, 9.0, 9.0))
    bn = PairBinning(np.linspace(0.0, 1.0, 5),
                     np.linspace(0.0, 2.0, 5),
                     np.linspace(0.0, 2.0, 5))
    frames = _uniform_frames(300, 400, 12.0, seed=11)
    est = estimate_f2_conditional(frames, uni, reg, bn)
    assert est.empty_slices().size == 0
    p = est.probabilities()
    sums = p.sum(axis=(1, 2))
    assert np.allclose(sums, 1.0, atol=1e-12)
    rho = 400 / 12.0 ** 3
    # Aggregate the tangential rings per normal shell: the innermost
    # rings hold too few counts individually for a tight per-bin bound.
    shell_vol = np.diff(bn.normal_edges) * np.pi * bn.tangential_edges[-1] ** 2
    beyond = bn.normal_edges[:-1] >= bn.d_edges[-1]
    dens = (est.mean_counts().sum(axis=2)[:, beyond]
            / shell_vol[None, beyond])
    assert np.abs(dens / rho - 1.0).max() < 0.10


def test_f2_conditional_empty_slice_warns():
    uni = UniverseSpec(box_lengths=(12.0, 12.0, 12.0), n_total=2)
    reg = RegionSpec(omega_lo=(3.0, 3.0, 3.0), omega_hi=(9.0, 9.0, 9.0))
    bn = PairBinning(np.linspace(0.0, 1.0, 3),
                     np.linspace(0.0, 2.0, 3),
                     np.linspace(0.0, 2.0, 3))
    frames = [np.array([[6.0, 6.0, 6.0], [6.2, 6.0, 6.0]])]  # deep interior
    with pytest.warns(EmptyConditioningBin):
        est = estimate_f2_conditional(frames, uni, reg, bn)
    assert est.counts.sum() == 0


def test_f2_conditional_merge_matches_full_run():
    uni = UniverseSpec(box_lengths=(12.0, 12.0, 12.0), n_total=200)
    reg = RegionSpec(omega_lo=(3.0, 3.0, 3.0), omega_hi=(9.0, 9.0, 9.0))
    bn = PairBinning(np.linspace(0.0, 1.0, 3),
                     np.linspace(0.0, 2.0, 4),
                     np.linspace(0.0, 2.0, 4))
    frames = _uniform_frames(40, 200, 12.0, seed=5)
    full = estimate_f2_conditional(frames, uni, reg, bn)
    a = estimate_f2_conditional(frames[:25], uni, reg, bn)
    b = estimate_f2_conditional(frames[25:], uni, reg, bn)
    m = a.merge(b)
    assert np.array_equal(m.counts, full.counts)
    assert np.array_equal(m.inner_samples, full.inner_samples)
    assert np.array_equal(m.tail_counts, full.tail_counts)


def test_binning_validation():
    with pytest.raises(ConfigInvalid):
        PairBinning(np.array([1.0, 0.5]), np.array([0.0, 1.0]),
                    np.array([0.0, 1.0]))
    with pytest.raises(ConfigInvalid):
        PairBinning(np.array([0.0]), np.array([0.0, 1.0]),
                    np.array([0.0, 1.0]))


# ---------------------------------------------------------------------------
# mean-field boundary force


def test_uniform_mean_force_matches_reference_quadrature():
    # Frozen references computed two independent ways (3D Cartesian
    # midpoint sum at high resolution, and exact reduction of the
    # tangential integral followed by adaptive 1D quadrature); the two
    # agreed to 1e-4 or better at every point.
    cases = [
        (WCA_POT, 0.4, 0.5, -991.760409771),
        (WCA_POT, 0.4, 0.8, -5.27237911085),
        (WCA_POT, 0.4, 1.0, -0.0852727392471),
        (LJ, 0.3, 0.8, -2.55451252483),
        (LJ, 0.3, 1.0, 1.00206143802),
        (LJ, 0.3, 2.0, 0.0342964192475),
    ]
    for pot, rho, d, ref in cases:
        f = mean_field_force(UniformDensity(rho), d, pot)
        assert f[0] == pytest.approx(ref, rel=0.01), (d, rho)
        assert f[1] == 0.0 and f[2] == 0.0
    # Repulsive outer particles push the inner particle inward.
    assert mean_field_force(UniformDensity(0.4), 0.5, WCA_POT)[0] < 0.0


def test_mean_force_trivial_cases():
    assert np.all(mean_field_force(UniformDensity(0.4), LJ.r_cut, LJ) == 0.0)
    assert np.all(mean_field_force(UniformDensity(0.4), 10.0, LJ) == 0.0)
    assert np.all(mean_field_force(UniformDensity(0.0), 0.5, LJ) == 0.0)
    with pytest.raises(ConfigInvalid):
        mean_field_force(UniformDensity(0.4), -0.1, LJ)
    with pytest.raises(ConfigInvalid):
        UniformDensity(-1.0)
    # The force fades out continuously at the interaction range.
    near = mean_field_force(UniformDensity(0.4), LJ.r_cut - 1e-4, LJ)
    assert abs(near[0]) < 1e-6


def test_quadrature_not_converged_raises():
    with pytest.raises(QuadratureNotConverged):
        mean_field_force(UniformDensity(0.4), 0.5, WCA_POT,
                         rel_tol=1e-12, max_doublings=2)


def test_from_estimate_matches_uniform_quadrature():
    # Fill the conditional histogram with the exact uniform half-space
    # occupation numbers (rho times the bin volume), so the empirical
    # path must reproduce the quadrature up to bin discretization.
    rho = 0.3
    d_eval = 1.0  # also a bin edge, so the filled half-space cuts cleanly
    bn = PairBinning(np.array([0.95, 1.05]),
                     np.linspace(0.0, 2.5, 51),
                     np.linspace(0.0, 2.5, 51))
    inner = 1_000_000
    cn = 0.5 * (bn.normal_edges[:-1] + bn.normal_edges[1:])
    widths = np.diff(bn.normal_edges)
    ring = np.pi * (bn.tangential_edges[1:] ** 2
                    - bn.tangential_edges[:-1] ** 2)
    vol = widths[:, None] * ring[None, :]
    occ = np.where(cn[:, None] >= d_eval, rho * vol * inner, 0.0)
    est = ConditionalPairEstimate(
        bn, np.rint(occ).astype(np.int64),
        np.array([inner]), np.zeros(1, np.int64), np.zeros(1, np.int64))
    f_emp = mean_field_force(FromEstimate(est), 1.0, LJ)
    f_uni = mean_field_force(UniformDensity(rho), 1.0, LJ)
    assert f_emp[0] == pytest.approx(f_uni[0], rel=0.05)


def test_from_estimate_outside_grid_rejected():
    bn = PairBinning(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                     np.array([0.0, 1.0]))
    est = ConditionalPairEstimate(
        bn, np.zeros((1, 1, 1), np.int64), np.array([5]),
        np.zeros(1, np.int64), np.zeros(1, np.int64))
    with pytest.raises(ConfigInvalid):
        mean_field_force(FromEstimate(est), 1.5, LJ)


def test_mean_force_table_interpolates_and_cuts_off():
    model = UniformDensity(0.4)
    centers = np.linspace(0.6, WCA_POT.r_cut, 12)
    tab = MeanFieldForceTable.from_model(model, WCA_POT, centers)
    for i, c in enumerate(centers):
        assert tab.values[i] == pytest.approx(
            mean_field_force(model, c, WCA_POT)[0])
    mid = 0.5 * (centers[3] + centers[4])
    expect = 0.5 * (tab.values[3] + tab.values[4])
    assert tab.force(mid) == pytest.approx(expect)
    assert tab.force(WCA_POT.r_cut) == 0.0
    assert tab.force(5.0) == 0.0
