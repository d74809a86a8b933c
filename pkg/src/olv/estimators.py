"""Statistical estimators for open-subdomain observables.

Turns trajectories and crossing-event logs into the quantities that
characterize an open particle system: the occupancy law p_n, boundary
flux records, the conditional distribution of outer particles seen from
an inner particle near the boundary, and the mean force that a
reservoir at given density exerts across the boundary.

High-dimensional n-particle densities are never tabulated directly;
everything here is a low-dimensional functional with honest error bars
(autocorrelation-aware subsampling plus block bootstrap).  All
accumulator types merge associatively so trajectory shards processed
independently combine into one estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigInvalid,
    EmptyConditioningBin,
    InconsistentLog,
    QuadratureNotConverged,
    TooFewSamples,
)
from .geometry import (
    Region,
    RegionSpec,
    UniverseSpec,
    boundary_distance,
    minimum_image,
    region_labels,
)
from .potentials import PairPotentialSpec, dv_dr
from .stats import DEFAULT_RESAMPLES, block_bootstrap, decorrelation_stride

__all__ = [
    "OccupancyHistogram",
    "FluxRecord",
    "PairBinning",
    "ConditionalPairEstimate",
    "UniformDensity",
    "FromEstimate",
    "MeanFieldForceTable",
    "estimate_pn",
    "estimate_flux",
    "estimate_f2_conditional",
    "mean_field_force",
    "normalization_check",
]


# ---------------------------------------------------------------------------
# occupancy law


@dataclass
class OccupancyHistogram:
    """Counts of subdomain occupancy, with optional bootstrap errors.

    ``counts[n]`` is the number of decorrelated samples with exactly n
    particles inside the subdomain; probabilities are ``counts/total``.
    """

    counts: np.ndarray
    total: int
    stride: int
    errors: np.ndarray | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise ConfigInvalid("occupancy counts must be nonnegative")
        if self.total != int(self.counts.sum()):
            raise ConfigInvalid("total must equal the sum of counts")

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise TooFewSamples("empty occupancy histogram")
        return self.counts / float(self.total)

    def mean(self) -> float:
        p = self.probabilities()
        return float(np.dot(np.arange(p.size), p))

    def variance(self) -> float:
        p = self.probabilities()
        n = np.arange(p.size)
        m = np.dot(n, p)
        return float(np.dot((n - m) ** 2, p))

    def merge(self, other: "OccupancyHistogram") -> "OccupancyHistogram":
        if self.stride != other.stride:
            raise ConfigInvalid("cannot merge histograms of unequal stride")
        size = max(self.counts.size, other.counts.size)
        c = np.zeros(size, dtype=np.int64)
        c[: self.counts.size] += self.counts
        c[: other.counts.size] += other.counts
        return OccupancyHistogram(c, self.total + other.total, self.stride)


def estimate_pn(n_series, stride: int | None = None, *,
                n_max: int | None = None,
                n_resamples: int = DEFAULT_RESAMPLES,
                rng: np.random.Generator | None = None) -> OccupancyHistogram:
    """Occupancy probability law from an occupancy time series.

    The series is subsampled at the decorrelation stride (estimated from
    its integrated autocorrelation time unless given), histogrammed, and
    the per-bin probabilities get moving-block bootstrap standard
    errors.
    """
    series = np.asarray(n_series)
    if series.ndim != 1 or series.size < 2:
        raise TooFewSamples("occupancy series must be 1D with >= 2 entries")
    if np.any(series < 0):
        raise ConfigInvalid("occupancy cannot be negative")
    if stride is None:
        stride = decorrelation_stride(series.astype(float))
    if series.size <= stride:
        raise TooFewSamples(
            f"series of {series.size} samples is not longer than the "
            f"decorrelation stride {stride}")
    sub = series[::stride].astype(np.int64)
    nb = (int(n_max) if n_max is not None else int(sub.max())) + 1
    if sub.max() >= nb:
        raise ConfigInvalid("n_max smaller than an observed occupancy")
    counts = np.bincount(sub, minlength=nb)

    if rng is None:
        rng = np.random.default_rng(0)
    def _prob(a):
        return np.bincount(a.astype(np.int64), minlength=nb) / a.size
    boot = block_bootstrap(sub.astype(float), _prob,
                           n_resamples=n_resamples, rng=rng)
    return OccupancyHistogram(counts, int(sub.size), int(stride),
                              errors=np.asarray(boot.error))


def normalization_check(hist: OccupancyHistogram) -> float:
    """Sum of occupancy probabilities; equals 1 within 1e-12 by contract."""
    return float(hist.probabilities().sum())


# ---------------------------------------------------------------------------
# boundary flux


@dataclass
class FluxRecord:
    """Per-occupancy crossing counts over an observation window.

    ``in_counts[n]`` counts entries observed while the subdomain held n
    particles (the n -> n+1 transition); ``out_counts[n]`` counts exits
    from n+1 to n.  Rates are events per unit time; the per-edge and net
    rates carry bootstrap errors when produced by ``estimate_flux``.
    """

    in_counts: np.ndarray
    out_counts: np.ndarray
    total_time: float
    net_rate: float = 0.0
    net_error: float = np.inf
    edge_net_rates: np.ndarray | None = None
    edge_net_errors: np.ndarray | None = None

    def in_rate(self, n: int) -> float:
        return float(self.in_counts[n] / self.total_time)

    def out_rate(self, n: int) -> float:
        return float(self.out_counts[n] / self.total_time)

    def merge(self, other: "FluxRecord") -> "FluxRecord":
        size = max(self.in_counts.size, other.in_counts.size)
        ic = np.zeros(size, dtype=np.int64)
        oc = np.zeros(size, dtype=np.int64)
        ic[: self.in_counts.size] += self.in_counts
        ic[: other.in_counts.size] += other.in_counts
        oc[: self.out_counts.size] += self.out_counts
        oc[: other.out_counts.size] += other.out_counts
        t = self.total_time + other.total_time
        net = float((ic.sum() - oc.sum()) / t)
        return FluxRecord(ic, oc, t, net_rate=net)


def _per_step_edge_counts(events, n_series, dt, t0):
    """Replay events step by step, validating against the occupancy series.

    Returns (in_counts, out_counts, per_step_net, per_step_edge) where
    per_step_edge is a dict {step: [(edge, +-1), ...]} only for steps
    that had events.
    """
    steps = len(n_series) - 1
    nmax = int(np.max(n_series))
    in_counts = np.zeros(nmax + 2, dtype=np.int64)
    out_counts = np.zeros(nmax + 2, dtype=np.int64)

    by_step: dict[int, list] = {}
    for ev in events:
        k = int(np.ceil((ev.time - t0) / dt - 1e-9))
        if k < 1 or k > steps:
            raise InconsistentLog(
                f"event at t={ev.time} falls outside the run window")
        by_step.setdefault(k, []).append(ev)

    edge_hits: dict[int, list] = {}
    for k, evs in by_step.items():
        evs.sort(key=lambda e: e.time)
        n = int(n_series[k - 1])
        hits = []
        for ev in evs:
            if ev.direction == "in":
                hits.append((n, +1))
                in_counts[n] += 1
                n += 1
            elif ev.direction == "out":
                n -= 1
                if n < 0:
                    raise InconsistentLog("more exits than particles present")
                hits.append((n, -1))
                out_counts[n] += 1
            else:
                raise InconsistentLog(f"unknown direction {ev.direction!r}")
        if n != int(n_series[k]):
            raise InconsistentLog(
                f"step {k}: events give occupancy {n}, series says "
                f"{int(n_series[k])}")
        edge_hits[k] = hits
    for k in range(1, steps + 1):
        if k not in by_step and n_series[k] != n_series[k - 1]:
            raise InconsistentLog(
                f"step {k}: occupancy changed with no logged event")
    return in_counts, out_counts, edge_hits


def estimate_flux(events, n_series, dt: float, *, t0: float = 0.0,
                  n_resamples: int = DEFAULT_RESAMPLES,
                  max_chunks: int = 2000,
                  rng: np.random.Generator | None = None) -> FluxRecord:
    """Crossing rates from an event log and its occupancy series.

    Every event is replayed against the per-step occupancy record; any
    mismatch raises InconsistentLog.  Net rates (total and per edge
    n <-> n+1) carry moving-block bootstrap errors computed over
    contiguous time chunks.
    """
    n_series = np.asarray(n_series)
    if n_series.ndim != 1 or n_series.size < 2:
        raise TooFewSamples("occupancy series must be 1D with >= 2 entries")
    steps = n_series.size - 1
    total_time = steps * dt
    in_counts, out_counts, edge_hits = _per_step_edge_counts(
        events, n_series, dt, t0)

    n_edges = in_counts.size
    chunk = max(1, -(-steps // max_chunks))
    n_chunks = -(-steps // chunk)
    edge_mat = np.zeros((n_chunks, n_edges), dtype=float)
    for k, hits in edge_hits.items():
        row = (k - 1) // chunk
        for edge, sgn in hits:
            edge_mat[row, edge] += sgn

    net_rate = float((in_counts.sum() - out_counts.sum()) / total_time)
    edge_net = edge_mat.sum(axis=0) / total_time

    if rng is None:
        rng = np.random.default_rng(0)
    record = FluxRecord(in_counts, out_counts, total_time,
                        net_rate=net_rate, edge_net_rates=edge_net)
    if n_chunks >= 4:
        scale = n_chunks * chunk * dt  # resampled span, = total time padded
        boot_e = block_bootstrap(edge_mat,
                                 lambda a: a.sum(axis=0) / scale,
                                 n_resamples=n_resamples, rng=rng)
        boot_n = block_bootstrap(edge_mat.sum(axis=1),
                                 lambda a: a.sum() / scale,
                                 n_resamples=n_resamples, rng=rng)
        record.edge_net_errors = np.asarray(boot_e.error)
        record.net_error = float(boot_n.error)
    return record


# ---------------------------------------------------------------------------
# conditional pair distribution


@dataclass(frozen=True)
class PairBinning:
    """Bin edges for the conditional pair histogram.

    ``d_edges`` bins the inner particle's distance to the boundary;
    ``normal_edges`` and ``tangential_edges`` bin the separation vector
    to an outer particle in the local frame of the nearest face (axis
    along the outward normal, magnitude across it).
    """

    d_edges: np.ndarray
    normal_edges: np.ndarray
    tangential_edges: np.ndarray

    def __post_init__(self):
        for name in ("d_edges", "normal_edges", "tangential_edges"):
            e = np.asarray(getattr(self, name), dtype=float)
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ConfigInvalid(f"{name} must be increasing, >= 2 edges")
            object.__setattr__(self, name, e)

    @property
    def r_max(self) -> float:
        return float(np.hypot(self.normal_edges[-1],
                              self.tangential_edges[-1]))


@dataclass
class ConditionalPairEstimate:
    """Histogram of outer-particle positions seen from inner particles.

    ``counts[i, j, k]`` counts outer particles in separation bin (j, k)
    observed from inner particles in conditioning slice i;
    ``inner_samples[i]`` counts the inner-particle observations per
    slice, so ``mean_counts`` is outer particles per observation.  Pairs
    beyond the separation grid are tallied per slice in ``tail_counts``
    (within half a grid radius past the range, flagging what the cutoff
    neglects) and ``off_grid_counts`` (inside range but outside the
    local-frame grid, e.g. across a corner).
    """

    binning: PairBinning
    counts: np.ndarray
    inner_samples: np.ndarray
    tail_counts: np.ndarray
    off_grid_counts: np.ndarray

    def probabilities(self) -> np.ndarray:
        """Per-slice bin probabilities; empty slices stay all-zero."""
        tot = self.counts.sum(axis=(1, 2), keepdims=True).astype(float)
        tot[tot == 0.0] = 1.0
        return self.counts / tot

    def mean_counts(self) -> np.ndarray:
        """Outer particles per bin per inner observation, by slice."""
        inner = self.inner_samples.astype(float).copy()
        inner[inner == 0.0] = 1.0
        return self.counts / inner[:, None, None]

    def empty_slices(self) -> np.ndarray:
        return np.flatnonzero(self.inner_samples == 0)

    def merge(self, other: "ConditionalPairEstimate") -> "ConditionalPairEstimate":
        for name in ("d_edges", "normal_edges", "tangential_edges"):
            if not np.array_equal(getattr(self.binning, name),
                                  getattr(other.binning, name)):
                raise ConfigInvalid("cannot merge estimates on different bins")
        return ConditionalPairEstimate(
            self.binning,
            self.counts + other.counts,
            self.inner_samples + other.inner_samples,
            self.tail_counts + other.tail_counts,
            self.off_grid_counts + other.off_grid_counts)


def estimate_f2_conditional(frames, universe: UniverseSpec,
                            region: RegionSpec,
                            binning: PairBinning) -> ConditionalPairEstimate:
    """Conditional outer-particle histogram from configuration frames.

    For every frame and every particle inside the subdomain whose
    boundary distance falls on the conditioning grid, all particles
    outside the subdomain within ``binning.r_max`` are binned by their
    separation in the local frame of the nearest face.  Conditioning
    slices that never receive an inner particle are reported through an
    EmptyConditioningBin warning.
    """
    bn = binning
    nd = bn.d_edges.size - 1
    nn = bn.normal_edges.size - 1
    nt = bn.tangential_edges.size - 1
    counts = np.zeros((nd, nn, nt), dtype=np.int64)
    inner_samples = np.zeros(nd, dtype=np.int64)
    tail = np.zeros(nd, dtype=np.int64)
    off_grid = np.zeros(nd, dtype=np.int64)

    for fr in frames:
        q = fr.q if hasattr(fr, "q") else np.asarray(fr, dtype=float)
        labels = region_labels(q, region)
        inner_mask = labels == int(Region.INSIDE_OMEGA)
        outer_mask = ~inner_mask
        if not np.any(inner_mask):
            continue
        dist, normal, _ = boundary_distance(q[inner_mask], region)
        on_grid = (dist >= bn.d_edges[0]) & (dist < bn.d_edges[-1])
        if not np.any(on_grid):
            continue
        qi = q[inner_mask][on_grid]
        ni = normal[on_grid]
        di = np.digitize(dist[on_grid], bn.d_edges) - 1
        np.add.at(inner_samples, di, 1)
        qo = q[outer_mask]
        if qo.size == 0:
            continue
        for a in range(qi.shape[0]):
            s = minimum_image(qo - qi[a], universe)
            r = np.linalg.norm(s, axis=1)
            tail[di[a]] += int(np.count_nonzero(
                (r > bn.r_max) & (r <= 1.5 * bn.r_max)))
            near = r <= bn.r_max
            if not np.any(near):
                continue
            sn = s[near] @ ni[a]
            st = np.linalg.norm(s[near] - sn[:, None] * ni[a], axis=1)
            jn = np.digitize(sn, bn.normal_edges) - 1
            kt = np.digitize(st, bn.tangential_edges) - 1
            ok = (jn >= 0) & (jn < nn) & (kt >= 0) & (kt < nt)
            np.add.at(counts, (di[a], jn[ok], kt[ok]), 1)
            off_grid[di[a]] += int(np.count_nonzero(~ok))

    est = ConditionalPairEstimate(bn, counts, inner_samples, tail, off_grid)
    empty = est.empty_slices()
    if empty.size:
        warnings.warn(EmptyConditioningBin(
            f"conditioning slices with no inner samples: {empty.tolist()}"))
    return est


# ---------------------------------------------------------------------------
# mean-field boundary force


@dataclass(frozen=True)
class UniformDensity:
    """Outer particles modelled as a homogeneous reservoir at this density."""

    rho: float

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigInvalid("density must be nonnegative")


@dataclass(frozen=True)
class FromEstimate:
    """Outer particles taken from an empirical conditional estimate."""

    estimate: ConditionalPairEstimate


def _uniform_quadrature(rho, d, potential, rel_tol, max_doublings):
    """Cylindrical midpoint quadrature of the normal mean force.

    Integrates rho * v'(r) * s_n / r over the half-space slab
    s_n in [d, r_c], with the tangential extent of each strip bounded by
    the interaction sphere, doubling the resolution until two successive
    refinements agree to ``rel_tol``.
    """
    rc = potential.r_cut
    prev = None
    n = 32
    for _ in range(max_doublings):
        sn = d + (np.arange(n) + 0.5) * (rc - d) / n
        wn = (rc - d) / n
        total = 0.0
        for x in sn:
            tmax = np.sqrt(max(rc * rc - x * x, 0.0))
            if tmax <= 0.0:
                continue
            st = (np.arange(n) + 0.5) * (tmax / n)
            wt = tmax / n
            r = np.hypot(x, st)
            total += np.sum(dv_dr(potential, r) * (x / r) * 2.0 * np.pi
                            * st) * wt * wn
        val = rho * total
        if prev is not None:
            scale = max(abs(val), abs(prev), 1e-300)
            if abs(val - prev) <= rel_tol * scale:
                return val
        prev = val
        n *= 2
    raise QuadratureNotConverged(
        f"mean-field quadrature did not reach {rel_tol:g} at d={d:g}")


def _empirical_sum(est: ConditionalPairEstimate, d, potential):
    """Mean normal force from the empirical conditional histogram."""
    bn = est.binning
    if not (bn.d_edges[0] <= d < bn.d_edges[-1]):
        raise ConfigInvalid(
            f"d={d:g} outside the conditioning grid of the estimate")
    i = int(np.digitize(d, bn.d_edges)) - 1
    if est.inner_samples[i] == 0:
        warnings.warn(EmptyConditioningBin(
            f"conditioning slice {i} has no inner samples"))
        return 0.0
    mc = est.mean_counts()[i]
    cn = 0.5 * (bn.normal_edges[:-1] + bn.normal_edges[1:])
    ct = 0.5 * (bn.tangential_edges[:-1] + bn.tangential_edges[1:])
    SN, ST = np.meshgrid(cn, ct, indexing="ij")
    r = np.hypot(SN, ST)
    # Bins at or beyond the cutoff exert no force; bins below the hard
    # floor hold no physically reachable pairs.
    inside = (r >= potential.floor) & (r < potential.r_cut)
    f = np.zeros_like(r)
    f[inside] = dv_dr(potential, r[inside]) * SN[inside] / r[inside]
    return float(np.sum(mc * f))


def mean_field_force(model, d: float, potential: PairPotentialSpec, *,
                     rel_tol: float = 0.005,
                     max_doublings: int = 10) -> np.ndarray:
    """Mean force on an inner particle at boundary distance ``d``.

    Returned in the local boundary frame: component 0 along the outward
    normal (negative values point into the subdomain), tangential
    components identically zero by symmetry.  Uniform reservoirs are
    integrated by adaptive quadrature to ``rel_tol``; empirical models
    sum the histogrammed outer-particle counts against the pair force.
    """
    if d < 0:
        raise ConfigInvalid("boundary distance must be nonnegative")
    out = np.zeros(3)
    if d >= potential.r_cut:
        return out
    if isinstance(model, UniformDensity):
        if model.rho == 0.0:
            return out
        out[0] = _uniform_quadrature(model.rho, d, potential,
                                     rel_tol, max_doublings)
        return out
    if isinstance(model, FromEstimate):
        out[0] = _empirical_sum(model.estimate, d, potential)
        return out
    raise ConfigInvalid(f"unknown mean-field model {type(model).__name__}")


@dataclass(frozen=True)
class MeanFieldForceTable:
    """Tabulated normal mean force versus boundary distance.

    Linear interpolation between tabulated centers keeps the force
    continuous; it vanishes identically beyond the interaction range.
    """

    d_centers: np.ndarray
    values: np.ndarray
    r_cut: float

    def __post_init__(self):
        c = np.asarray(self.d_centers, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if c.ndim != 1 or c.size != v.size or np.any(np.diff(c) <= 0):
            raise ConfigInvalid("table needs increasing centers matching values")
        object.__setattr__(self, "d_centers", c)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_model(cls, model, potential: PairPotentialSpec,
                   d_centers) -> "MeanFieldForceTable":
        vals = [mean_field_force(model, d, potential)[0] for d in d_centers]
        return cls(np.asarray(d_centers, float), np.asarray(vals),
                   potential.r_cut)

    def force(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        v = np.interp(d, self.d_centers, self.values,
                      left=self.values[0], right=0.0)
        return np.where(d >= self.r_cut, 0.0, v)
