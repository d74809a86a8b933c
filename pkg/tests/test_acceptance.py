"""End-to-end acceptance gate: nine numbered criteria, one test each.

Every test prints a single ``A<k> PASS`` verdict line with the measured
numbers once its assertions hold (run ``pytest -v -s`` to see them; on a
failure the assertion message carries the same numbers).  The criteria:

A1  closed-universe MD occupancy of a 10% subdomain is Binomial(N, 0.1)
A2  occupancy histograms normalize to 1; the grid ladder conserves mass
A3  hierarchy solver converges at first order against exact references
A4  equilibrated open-MD and jump-process runs show zero net edge flux
A5  closed NVT, GCMC, and open MD agree on subdomain <n> and Var(n)
A6  ideal jump chain is Poisson in n with Maxwell birth momenta
A7  uniform-reservoir mean force matches a 10x-resolution quadrature
A8  ideal grand-canonical fields are stationary under the closed ladder
A9  momentum-domain edge cells are empty at p_max = 8 sqrt(M T)

Statistical tests run on pinned seeds, so every number below is
reproducible; tolerances are the stated acceptance bounds, with frozen
regression pins where the quantity is deterministic.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
from scipy import stats

from olv.bergmann_lebowitz import (
    BLKernelSpec,
    BLState,
    chunk_events,
    flux_balance_check,
    run_bl,
)
from olv.engine import (
    MASK_EVERYWHERE,
    MASK_OUTSIDE_OMEGA,
    THERMOSTAT_LANGEVIN,
    EngineConfig,
    ThermostatSpec,
    initial_ideal_gas,
    initial_lattice,
    run,
)
from olv.ensembles import GCParams, binomial_pn, gcmc_sample, widom_mu
from olv.estimators import (
    UniformDensity,
    estimate_flux,
    estimate_pn,
    mean_field_force,
)
from olv.geometry import RegionSpec, UniverseSpec, occupancy
from olv.hierarchy import (
    ClosureSpec,
    DensityField,
    FACTORIZED,
    GRAND_CANONICAL,
    GridSpec,
    SoftGaussianPotential,
    compare,
    full_liouville_step,
    gaussian_packet,
    gc_ladder,
    hierarchy_step,
    marginalize,
    marginalize_all,
    maxwell_profile,
    pair_packet,
    run_hierarchy,
)
from olv.potentials import IDEAL, LENNARD_JONES, WCA, PairPotentialSpec
from olv.rng import stream
from olv.stats import block_bootstrap

pytestmark = pytest.mark.acceptance

IDEAL_POT = PairPotentialSpec(kind=IDEAL)

# Reservoir density whose factorized closure balances the unit-activity
# grand-canonical ladder: z sqrt(2 pi M / beta) at beta = 1, mu = -1.
RHO_MATCHED = math.exp(-1.0) * math.sqrt(2.0 * math.pi)


def _chisquare_against(counts, total, pmf):
    """Pearson chi-square of observed counts against a discrete pmf.

    Bins with expected count below 5 are pooled into the adjacent tail
    bins (the standard validity rule); the outermost pooled bin absorbs
    whatever analytic tail mass lies beyond the tabulated pmf so the
    observed and expected totals agree exactly.
    """
    obs = np.zeros(pmf.size)
    obs[: counts.size] = counts
    exp = pmf * total
    keep = exp >= 5.0
    i0 = int(np.argmax(keep))
    i1 = len(keep) - int(np.argmax(keep[::-1])) - 1
    o = obs[i0 : i1 + 1].copy()
    e = exp[i0 : i1 + 1].copy()
    if i0 > 0:
        o = np.concatenate(([obs[:i0].sum()], o))
        e = np.concatenate(([exp[:i0].sum()], e))
    if i1 < len(keep) - 1:
        o = np.concatenate((o, [obs[i1 + 1 :].sum()]))
        e = np.concatenate((e, [exp[i1 + 1 :].sum()]))
    e[-1] = total - e[:-1].sum()
    chi2, p = stats.chisquare(o, f_exp=e)
    return float(chi2), o.size - 1, float(p)


def _cube_region(box_edge, volume_fraction, delta=0.0):
    """Centered cubic subdomain holding the given fraction of the box."""
    side = box_edge * volume_fraction ** (1.0 / 3.0)
    lo = (box_edge - side) / 2.0
    return RegionSpec((lo, lo, lo), (lo + side,) * 3, delta_thickness=delta)


# ---------------------------------------------------------------------------
# A1: binomial occupancy of a closed ideal gas


def test_a1_closed_md_occupancy_binomial():
    # N = 1000 ideal particles in a periodic box, subdomain = 10% of the
    # volume.  Samples are decorrelated by construction: one Langevin
    # step of dt = 12 applies an exact Ornstein-Uhlenbeck momentum
    # refresh (gamma dt = 6, so momenta are redrawn) followed by a free
    # flight of ~12 thermal lengths across a box of edge 10, which wraps
    # positions to fresh uniform draws.  For an ideal gas both substeps
    # preserve uniform x Maxwell exactly at any dt, so the chain is
    # stationary and each of the 1e5 chunk ends is an independent state.
    t_start = time.monotonic()
    universe = UniverseSpec((10.0, 10.0, 10.0), 1000, temperature=1.0)
    region = _cube_region(10.0, 0.1)
    fraction = region.volume / universe.volume
    config = EngineConfig(
        dt=12.0,
        steps=1,
        thermostat=ThermostatSpec(THERMOSTAT_LANGEVIN, gamma=0.5),
        thermostat_mask=MASK_EVERYWHERE,
    )
    state = initial_ideal_gas(universe, stream(71, "acceptance.binomial"))
    n_samples = 100000
    samples = np.empty(n_samples + 1, dtype=np.int64)
    samples[0] = occupancy(state.q, region)
    for k in range(n_samples):
        result = run(universe, IDEAL_POT, dataclasses.replace(config, seed=k),
                     state)
        state = result.final
        samples[k + 1] = occupancy(state.q, region)

    hist = estimate_pn(samples, stride=1,
                       rng=stream(71, "acceptance.binomial.boot"))
    assert abs(float(hist.probabilities().sum()) - 1.0) <= 1e-12
    chi2, dof, p = _chisquare_against(hist.counts, hist.total,
                                      binomial_pn(1000, fraction))
    elapsed = time.monotonic() - t_start
    assert p > 0.01, f"A1 FAIL: chi-square p = {p:.4g} <= 0.01 (chi2 {chi2:.1f}/{dof})"
    assert elapsed < 300.0, f"A1 FAIL: {elapsed:.0f} s exceeds the 5 minute budget"
    print(f"A1 PASS: {hist.total} samples, chi-square p = {p:.3f} "
          f"(chi2 {chi2:.1f}/{dof} dof, > 0.01 required), {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# A2: histogram normalization and ladder mass conservation


def test_a2_histogram_normalization_and_ladder_conservation():
    rng = stream(11, "acceptance.norm")
    histograms = []

    universe = UniverseSpec((6.0, 6.0, 6.0), 50, temperature=1.0)
    region = _cube_region(6.0, 0.1)
    md = run(universe, IDEAL_POT, EngineConfig(dt=0.05, steps=3000),
             initial_ideal_gas(universe, rng), region=region)
    histograms.append(("open-md", estimate_pn(md.n_series, rng=rng)))

    params = GCParams(beta=1.0, mu=-2.0, volume_omega=8.0)
    gc = gcmc_sample(IDEAL_POT, params, 3000, rng)
    histograms.append(("gcmc", estimate_pn(gc.n_series[500:], rng=rng)))

    kernel = BLKernelSpec(nu=2.0, params=params, omega_lengths=(2.0, 2.0, 2.0))
    bl = run_bl(kernel, IDEAL_POT, BLState(0.0, np.zeros((0, 3)),
                                           np.zeros((0, 3))),
                steps=3000, dt_max=0.1, rng=rng)
    histograms.append(("bl", estimate_pn(bl.n_series[200:], rng=rng)))

    half = md.n_series.size // 2
    a = estimate_pn(md.n_series[:half], stride=5, rng=rng)
    b = estimate_pn(md.n_series[half:], stride=5, rng=rng)
    histograms.append(("merged", a.merge(b)))

    worst = 0.0
    for tag, hist in histograms:
        dev = abs(float(hist.probabilities().sum()) - 1.0)
        worst = max(worst, dev)
        assert dev <= 1e-12, f"A2 FAIL: {tag} histogram sums off by {dev:.2e}"

    # Grid ladder: reservoir filling of an initially empty subdomain must
    # conserve total mass (tracked levels plus the vacuum weight) to
    # rounding over 1e3 steps.
    grid = GridSpec(1.0, (0.25, 0.75), 40, 8.0, 16, 0.002)
    closure = ClosureSpec(mode=FACTORIZED, rho_res=RHO_MATCHED,
                          temperature=1.0)
    ladder = DensityField(grid, 1.0, np.zeros((grid.nxo, 16)),
                          np.zeros((grid.nxo, 16, grid.nxo, 16)))
    _, masses, _ = run_hierarchy(ladder, closure, steps=1000)
    drift = float(np.abs(masses - masses[0]).max())
    assert drift < 1e-10, f"A2 FAIL: ladder mass drift {drift:.2e} >= 1e-10"
    print(f"A2 PASS: {len(histograms)} histograms normalized "
          f"(worst deviation {worst:.1e} <= 1e-12), "
          f"ladder drift {drift:.1e} < 1e-10 over 1000 steps")


# ---------------------------------------------------------------------------
# A3: hierarchy solver convergence


def _n1_translate_error(refine):
    """Single-particle ladder vs the exact free-streaming translate."""
    L, p_max = 1.0, 8.0
    nx, npc = 400 * refine, 200 * refine
    dt = 0.8 * (L / nx) / p_max
    grid = GridSpec(L, (0.25, 0.75), nx, p_max, npc, dt)
    ladder = marginalize_all(gaussian_packet(grid, 0.6, 2.0, 0.07, 1.0))
    closure = ClosureSpec()
    steps = 200 * refine
    for _ in range(steps):
        ladder = hierarchy_step(ladder, closure)
    exact = marginalize_all(
        gaussian_packet(grid, 0.6, 2.0, 0.07, 1.0, time=steps * dt))
    return compare(ladder, exact).relative_l1


def test_a3_hierarchy_convergence():
    t_start = time.monotonic()
    # N = 1, ideal: the reference is the analytically translated packet
    # evaluated on the same grid, so the measured error is purely the
    # solver's.  Baseline resolution dx = L/400, dp = p_max/100.
    e_base = _n1_translate_error(1)
    e_fine = _n1_translate_error(2)
    ratio = e_base / e_fine
    assert e_base <= 0.02, f"A3 FAIL: N=1 error {e_base:.4f} > 2%"
    assert ratio >= 1.8, f"A3 FAIL: refinement ratio {ratio:.3f} < 1.8"
    # Frozen regression pins from the first verified run.
    assert e_base == pytest.approx(0.013520753961966071, rel=1e-9)
    assert e_fine == pytest.approx(0.006993084813893977, rel=1e-9)

    # N = 2, interacting: matched-resolution closed pair solve,
    # marginalized at the end, against the vacuum-closure ladder started
    # from the marginalized initial field.  Coarse grid dx = L/60,
    # dp = p_max/24; the closure model gap is the measured difference.
    grid = GridSpec(1.0, (0.2, 0.8), 60, 6.0, 48, dt=0.002)
    pot = SoftGaussianPotential(epsilon=0.5, width=0.08)
    full = pair_packet(grid, (0.42, 1.2, 0.07, 1.0), (0.58, -0.8, 0.07, 1.0))
    ladder = DensityField(grid, 0.0, np.zeros((grid.nxo, grid.np_cells)),
                          marginalize(full, 2))
    closure = ClosureSpec()
    for _ in range(75):
        full = full_liouville_step(full, pot)
        ladder = hierarchy_step(ladder, closure, pot)
    e_pair = compare(ladder, marginalize_all(full)).relative_l1
    elapsed = time.monotonic() - t_start
    assert e_pair <= 0.05, f"A3 FAIL: N=2 error {e_pair:.4f} > 5%"
    assert e_pair == pytest.approx(0.004776775642200358, rel=1e-9)
    assert elapsed < 600.0, f"A3 FAIL: {elapsed:.0f} s exceeds the 10 minute budget"
    print(f"A3 PASS: N=1 L1 {100 * e_base:.2f}% (<= 2%), "
          f"refinement ratio {ratio:.2f} (>= 1.8); "
          f"N=2 L1 {100 * e_pair:.2f}% (<= 5%); {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# A4: equilibrium flux balance


def test_a4_equilibrium_flux_balance():
    # Open-MD leg: an ideal gas initialized from its exact stationary
    # law, so every net edge rate is compatible with zero from step one.
    # Net crossings of one occupancy edge telescope along a single path,
    # which is why the per-edge z values sit far inside the band.
    universe = UniverseSpec((6.0, 6.0, 6.0), 200, temperature=1.0)
    region = _cube_region(6.0, 0.1)
    config = EngineConfig(dt=0.05, steps=40000)
    state = initial_ideal_gas(universe, stream(23, "acceptance.balance"))
    result = run(universe, IDEAL_POT, config, state, region=region)
    flux = estimate_flux(result.events, result.n_series, config.dt,
                         rng=stream(23, "acceptance.balance.boot"))
    z_md = 0.0
    for n in range(flux.edge_net_rates.size):
        err = flux.edge_net_errors[n]
        net = flux.edge_net_rates[n]
        if err > 0:
            z_md = max(z_md, abs(net) / err)
        else:
            assert net == 0.0, f"A4 FAIL: edge {n} net {net:g} with zero error"
    z_net = abs(flux.net_rate) / flux.net_error
    assert z_md <= 3.0, f"A4 FAIL: open-MD max edge |z| = {z_md:.2f} > 3"
    assert z_net <= 3.0, f"A4 FAIL: open-MD net rate z = {z_net:.2f} > 3"

    # Jump-process leg: one long run at its stationary occupancy law,
    # chunked into equal time windows that act as repeated experiments
    # for the resampling errors.
    lam = 10.0
    mu = math.log(lam / 8.0) - 1.5 * math.log(2.0 * math.pi)
    params = GCParams(beta=1.0, mu=mu, volume_omega=8.0)
    kernel = BLKernelSpec(nu=1.0, params=params, omega_lengths=(2.0, 2.0, 2.0))
    rng = stream(29, "acceptance.balance.bl")
    initial = BLState(0.0, rng.uniform(0.0, 2.0, (10, 3)),
                      rng.standard_normal((10, 3)))
    blrun = run_bl(kernel, IDEAL_POT, initial, steps=40000, dt_max=0.1,
                   rng=rng)
    t_end, burn = 4000.0, 200.0
    windows, width = chunk_events(
        [ev for ev in blrun.events if ev.time >= burn], burn, t_end, 38)
    balance = flux_balance_check(
        windows, width, rng=stream(29, "acceptance.balance.bl.boot"))
    z_bl = 0.0
    for k in range(balance.net_rates.size):
        if balance.net_errors[k] > 0:
            z_bl = max(z_bl, abs(balance.net_rates[k]) / balance.net_errors[k])
        else:
            assert balance.net_rates[k] == 0.0
    assert z_bl <= 3.0, f"A4 FAIL: jump-process max edge |z| = {z_bl:.2f} > 3"
    print(f"A4 PASS: max edge |z| open-MD {z_md:.2f}, net {z_net:.2f}, "
          f"jump process {z_bl:.2f} (all <= 3 resampling sigma)")


# ---------------------------------------------------------------------------
# A5: three-way ensemble match at one state point


def _window_moments(series, tag):
    x = np.asarray(series, dtype=float)
    mean = block_bootstrap(x, np.mean, rng=stream(53, tag + ".mean"))
    var = block_bootstrap(x, np.var, rng=stream(53, tag + ".var"))
    return mean.value, mean.error, var.value, var.error


def test_a5_ensemble_state_match():
    # WCA at T = 1, rho = 0.4: 400 particles in a periodic box of edge
    # 10, observation window = the centered cube of volume 27.  All
    # three legs measure the occupancy of that same window in the same
    # periodic geometry.  Matching the observable matters: a periodic
    # GCMC cell of volume 27 has Var(n) ~ 1.9 while the embedded window
    # shows ~3.8, because the sharp window boundary cuts through pair
    # correlations and adds an interface term that a self-contained cell
    # cannot produce.  Running GCMC in the full box and counting the
    # window removes that mismatch.
    t_start = time.monotonic()
    universe = UniverseSpec((10.0, 10.0, 10.0), 400, temperature=1.0)
    pot = PairPotentialSpec(kind=WCA, epsilon=1.0, sigma=1.0)
    region = RegionSpec((3.5, 3.5, 3.5), (6.5, 6.5, 6.5),
                        delta_thickness=pot.r_cut)
    thermostat = ThermostatSpec(THERMOSTAT_LANGEVIN, gamma=1.0)

    rng = stream(47, "acceptance.state")
    state = initial_lattice(universe, rng)
    equil = EngineConfig(dt=0.004, steps=5000, thermostat=thermostat,
                         thermostat_mask=MASK_EVERYWHERE, seed=470)
    state = run(universe, pot, equil, state).final
    closed_cfg = EngineConfig(dt=0.004, steps=300000, thermostat=thermostat,
                              thermostat_mask=MASK_EVERYWHERE,
                              frame_stride=300, seed=471)
    closed = run(universe, pot, closed_cfg, state, region=region)

    widom = widom_mu(closed.frames, pot, universe,
                     GCParams(beta=1.0, mu=0.0, volume_omega=27.0),
                     stream(47, "acceptance.state.widom"),
                     insertions_per_frame=2000)
    assert widom.error < 0.02, f"A5 FAIL: Widom error {widom.error:.3f} too large"

    params = GCParams(beta=1.0, mu=widom.mu, volume_omega=1000.0)
    gcmc = gcmc_sample(pot, params, 150000,
                       stream(47, "acceptance.state.gcmc"),
                       moves_per_sweep=100, checkpoint_stride=25,
                       initial=closed.final.q)
    window_series = np.array([occupancy(q, region) for q in gcmc.frames[400:]])

    open_equil = EngineConfig(dt=0.004, steps=2500, thermostat=thermostat,
                              thermostat_mask=MASK_OUTSIDE_OMEGA, seed=472)
    ostate = run(universe, pot, open_equil, closed.final, region=region).final
    open_cfg = EngineConfig(dt=0.004, steps=300000, thermostat=thermostat,
                            thermostat_mask=MASK_OUTSIDE_OMEGA, seed=473)
    openrun = run(universe, pot, open_cfg, ostate, region=region)

    legs = {
        "closed-nvt": _window_moments(closed.n_series[::10], "closed"),
        "gcmc": _window_moments(window_series, "gcmc"),
        "open-md": _window_moments(openrun.n_series[::10], "open"),
    }
    elapsed = time.monotonic() - t_start
    lines = []
    for tag, (m, dm, v, dv) in legs.items():
        assert 9.0 < m < 12.5, f"A5 FAIL: {tag} <n> = {m:.2f} implausible"
        lines.append(f"{tag} <n>={m:.3f}+-{dm:.3f} Var={v:.2f}+-{dv:.2f}")
    z_worst = 0.0
    pairs = [("closed-nvt", "gcmc"), ("closed-nvt", "open-md"),
             ("gcmc", "open-md")]
    for ta, tb in pairs:
        a, b = legs[ta], legs[tb]
        z_mean = abs(a[0] - b[0]) / math.hypot(a[1], b[1])
        z_var = abs(a[2] - b[2]) / math.hypot(a[3], b[3])
        z_worst = max(z_worst, z_mean, z_var)
        assert z_mean <= 3.0, (
            f"A5 FAIL: <n> of {ta} vs {tb} differ at z = {z_mean:.2f}")
        assert z_var <= 3.0, (
            f"A5 FAIL: Var(n) of {ta} vs {tb} differ at z = {z_var:.2f}")
    assert elapsed < 1800.0, f"A5 FAIL: {elapsed:.0f} s exceeds the 30 minute budget"
    print(f"A5 PASS: mu = {widom.mu:.4f}+-{widom.error:.4f}; "
          + "; ".join(lines)
          + f"; worst pairwise z = {z_worst:.2f} (<= 3); {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# A6: jump-process Poisson occupancy and Maxwell births


def test_a6_bl_poisson_maxwell():
    # Ideal chain at z|Omega| = 4: stationary occupancy is Poisson(4).
    # Occupancy relaxes at rate nu = 2, so samples taken every 20 spans
    # of 0.1 (four relaxation times) are decorrelated for the pooled
    # chi-square; birth momenta accumulate ~6e4 Maxwell draws.
    lam = 4.0
    mu = math.log(lam / 8.0) - 1.5 * math.log(2.0 * math.pi)
    params = GCParams(beta=1.0, mu=mu, volume_omega=8.0)
    kernel = BLKernelSpec(nu=2.0, params=params, omega_lengths=(2.0, 2.0, 2.0))
    rng = stream(101, "acceptance.poisson")
    blrun = run_bl(kernel, IDEAL_POT,
                   BLState(0.0, np.zeros((0, 3)), np.zeros((0, 3))),
                   steps=75000, dt_max=0.1, rng=rng)
    hist = estimate_pn(blrun.n_series[200:], stride=20,
                       rng=stream(101, "acceptance.poisson.boot"))
    assert abs(float(hist.probabilities().sum()) - 1.0) <= 1e-12
    pmf = stats.poisson.pmf(np.arange(hist.counts.size + 20), lam)
    chi2, dof, p = _chisquare_against(hist.counts, hist.total, pmf)
    assert p > 0.01, f"A6 FAIL: Poisson chi-square p = {p:.4g} <= 0.01"

    births = np.array([ev.momentum for ev in blrun.events
                       if ev.kind == "birth"])
    assert births.shape[0] > 50000
    mean_dev = float(np.abs(births.mean(axis=0)).max())
    m2_dev = float(np.abs((births ** 2).mean(axis=0) - 1.0).max())
    assert mean_dev <= 0.01, (
        f"A6 FAIL: birth momentum mean off by {mean_dev:.4f} thermal units")
    assert m2_dev <= 0.01, (
        f"A6 FAIL: birth momentum second moment off by {100 * m2_dev:.2f}%")
    print(f"A6 PASS: Poisson chi-square p = {p:.3f} "
          f"(chi2 {chi2:.1f}/{dof}, {hist.total} samples); "
          f"{births.shape[0]} births, |mean| <= {mean_dev:.4f}, "
          f"|<p^2>/MT - 1| <= {m2_dev:.4f} (both <= 1%)")


# ---------------------------------------------------------------------------
# A7: mean-field boundary force vs an independent quadrature


def _reference_mean_force(rho, d, pot, n):
    """Fixed-resolution midpoint quadrature of the normal mean force.

    Independent of the adaptive routine under test: the pair force is
    spelled out locally and the slab x tangential grid is a flat n x n
    midpoint rule rather than a doubling sequence.
    """
    rc = pot.r_cut
    eps, sig = pot.epsilon, pot.sigma
    sn = d + (np.arange(n) + 0.5) * (rc - d) / n
    wn = (rc - d) / n
    total = 0.0
    for x in sn:
        t_max = math.sqrt(max(rc * rc - x * x, 0.0))
        if t_max <= 0.0:
            continue
        st = (np.arange(n) + 0.5) * (t_max / n)
        r = np.hypot(x, st)
        s6 = (sig / r) ** 6
        dv = -(24.0 * eps / r) * (2.0 * s6 * s6 - s6)
        total += np.sum(dv * (x / r) * 2.0 * np.pi * st) * (t_max / n) * wn
    return rho * total


def test_a7_mean_field_quadrature():
    wca = PairPotentialSpec(kind=WCA)
    lj = PairPotentialSpec(kind=LENNARD_JONES)
    cases = [(wca, 0.4, 0.5), (wca, 0.4, 0.8), (wca, 0.4, 1.0),
             (lj, 0.3, 0.8), (lj, 0.3, 1.0), (lj, 0.3, 2.0)]
    worst = 0.0
    for pot, rho, d in cases:
        ref = _reference_mean_force(rho, d, pot, 2560)
        self_dev = abs(ref - _reference_mean_force(rho, d, pot, 1280))
        assert self_dev <= 1e-3 * abs(ref), "reference quadrature unconverged"
        f = mean_field_force(UniformDensity(rho), d, pot)
        dev = abs(f[0] - ref) / abs(ref)
        worst = max(worst, dev)
        assert dev <= 0.01, (
            f"A7 FAIL: d={d} {pot.kind}: {f[0]:.6g} vs reference {ref:.6g} "
            f"({100 * dev:.2f}% > 1%)")
        assert f[1] == 0.0 and f[2] == 0.0

    # At and beyond the interaction range the force vanishes exactly.
    for d in (lj.r_cut, 3.7, 10.0):
        assert np.all(mean_field_force(UniformDensity(0.4), d, lj) == 0.0)
    print(f"A7 PASS: {len(cases)} distances within "
          f"{100 * worst:.2f}% of the 10x quadrature (<= 1%); "
          f"force identically zero from d = r_cut on")


# ---------------------------------------------------------------------------
# A8: stationarity of ideal grand-canonical fields


def _gc_step_residual(nx, npc):
    grid = GridSpec(1.0, (0.25, 0.75), nx, 8.0, npc, 0.001)
    closure = ClosureSpec(mode=GRAND_CANONICAL, gc_beta=1.0, gc_mu=-1.0,
                          gc_h=1.0)
    ladder = gc_ladder(grid, 1.0, -1.0, 1.0)
    stepped = hierarchy_step(ladder, closure)
    residual = compare(stepped, ladder).total_l1
    d = stepped.diagnostics
    turnover = (d["f1_outflow"] + d["f1_inflow"]
                + d["f2_outflow"] + d["f2_inflow"])
    estimate = turnover * grid.dx / (grid.omega[1] - grid.omega[0])
    return residual, estimate


def test_a8_gc_closure_stationarity():
    # The ideal grand-canonical ladder is an exact discrete fixed point
    # of the closed hierarchy step (the closure ghosts reuse the same
    # float expressions as the ladder), so the per-step residual sits at
    # the rounding floor, orders below the first-order truncation
    # estimate built from the recorded boundary turnover.  The estimate
    # halves under grid refinement, as a first-order bound must.
    res_c, est_c = _gc_step_residual(40, 32)
    res_f, est_f = _gc_step_residual(80, 64)
    for tag, res, est in (("coarse", res_c, est_c), ("fine", res_f, est_f)):
        assert res < 1e-15, f"A8 FAIL: {tag} residual {res:.2e} above rounding"
        assert res < est, f"A8 FAIL: {tag} residual {res:.2e} >= estimate {est:.2e}"
    assert est_f < 0.6 * est_c, (
        f"A8 FAIL: estimate did not shrink under refinement "
        f"({est_c:.3e} -> {est_f:.3e})")
    print(f"A8 PASS: per-step residual {res_c:.1e} / {res_f:.1e} below "
          f"truncation estimate {est_c:.1e} / {est_f:.1e}, "
          f"estimate halves under refinement")


# ---------------------------------------------------------------------------
# A9: momentum-domain margin


def test_a9_momentum_domain_margin():
    # p_max = 8 sqrt(M T): the outermost momentum cells of equilibrium
    # data hold less than 1e-10 of the mass, so the wall (zero-flux)
    # momentum boundary cannot generate a visible artifact.
    grid = GridSpec(1.0, (0.25, 0.75), 40, 8.0, 64, 0.002)
    ladder_edge = gc_ladder(grid, 1.0, 0.0, 1.0).momentum_edge_fraction()
    field_edge = maxwell_profile(grid, 1.0).momentum_edge_fraction()
    assert ladder_edge < 1e-10, f"A9 FAIL: ladder edge mass {ladder_edge:.2e}"
    assert field_edge < 1e-10, f"A9 FAIL: field edge mass {field_edge:.2e}"
    print(f"A9 PASS: outermost momentum-cell mass {ladder_edge:.1e} (ladder) "
          f"/ {field_edge:.1e} (closed field), both < 1e-10")
