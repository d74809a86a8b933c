"""Closed-universe molecular dynamics around an open subdomain.

Velocity-Verlet integration with linked-cell forces, a region-masked
Langevin thermostat, optional reservoir tracers (outer particles excluded
from pair interactions), and an iteratively calibrated thermodynamic force
acting in the buffer layer.  Boundary crossings of the subdomain are
detected every step from the pre-wrap displacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import BoxTooSmall, ConfigInvalid, NonFiniteForce
from .geometry import (
    Region,
    RegionSpec,
    SimState,
    UniverseSpec,
    boundary_distance,
    crossing_events,
    occupancy,
    region_labels,
    wrap_positions,
)
from .potentials import IDEAL, PairPotentialSpec
from .rng import stream

THERMOSTAT_OFF = "off"
THERMOSTAT_LANGEVIN = "langevin"
MASK_EVERYWHERE = "everywhere"
MASK_OUTSIDE_OMEGA = "outside_omega"


@dataclass(frozen=True)
class ThermostatSpec:
    kind: str = THERMOSTAT_OFF
    gamma: float = 1.0
    temperature: float | None = None  # None: use the universe temperature

    def __post_init__(self):
        if self.kind not in (THERMOSTAT_OFF, THERMOSTAT_LANGEVIN):
            raise ConfigInvalid(f"unknown thermostat kind {self.kind!r}")
        if self.gamma < 0:
            raise ConfigInvalid("thermostat gamma must be nonnegative")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigInvalid("thermostat temperature must be positive")


@dataclass(frozen=True)
class EngineConfig:
    dt: float
    steps: int
    thermostat: ThermostatSpec = field(default_factory=ThermostatSpec)
    thermostat_mask: str = MASK_OUTSIDE_OMEGA
    cell_size: float | None = None  # None: potential cutoff
    frame_stride: int = 0  # 0: record only the initial and final frame
    tracer_mode: bool = False
    tracer_force_cap: float = 200.0  # per-particle force clamp in tracer mode
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigInvalid("dt must be positive")
        if self.steps < 0:
            raise ConfigInvalid("steps must be nonnegative")
        if self.frame_stride < 0:
            raise ConfigInvalid("frame_stride must be nonnegative")
        if self.thermostat_mask not in (MASK_EVERYWHERE, MASK_OUTSIDE_OMEGA):
            raise ConfigInvalid(f"unknown thermostat mask {self.thermostat_mask!r}")


def check_step_size(
    config: EngineConfig,
    universe: UniverseSpec,
    region: RegionSpec | None,
    potential: PairPotentialSpec,
) -> None:
    """Reject dt too large for crossing detection and neighbor bookkeeping.

    A thermal-speed particle must cover at most a quarter of the smallest
    relevant length (cell size, buffer thickness) per step.  Lengths that
    are zero or absent impose no constraint.
    """
    v_th = np.sqrt(universe.temperature / universe.mass)
    limits = []
    cell = config.cell_size if config.cell_size is not None else potential.r_cut
    if config.cell_size is not None and config.cell_size < potential.r_cut:
        raise ConfigInvalid("cell_size must be at least the potential cutoff")
    if cell > 0:
        limits.append(cell)
    if region is not None and region.delta_thickness > 0:
        limits.append(region.delta_thickness)
    if limits and v_th * config.dt > 0.25 * min(limits):
        raise ConfigInvalid(
            f"dt={config.dt:g} too large: thermal displacement exceeds a "
            f"quarter of min(cell size, buffer thickness)={min(limits):g}"
        )


def build_cell_list(state: SimState, universe: UniverseSpec, cutoff: float):
    """Pairs within the cutoff under minimum image, via spatial cells."""
    if cutoff > universe.box_lengths.min() / 3.0:
        raise BoxTooSmall(
            f"cutoff {cutoff:g} exceeds a third of the smallest box length"
        )
    return _kernels.collect_pairs(state.q, universe.box_lengths,
                                  universe.periodic, cutoff)


@dataclass(frozen=True)
class ThermoForceField:
    """Outward-normal force on buffer-layer particles, binned by distance.

    `values[k]` is the signed force along the outward normal of the
    subdomain for particles whose distance to its boundary falls in
    [edges[k], edges[k+1]).  Zero outside the buffer layer; magnitude
    clipped to max_magnitude.
    """

    edges: np.ndarray
    values: np.ndarray
    max_magnitude: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.edges.ndim != 1 or self.edges.size < 2:
            raise ConfigInvalid("edges must contain at least two values")
        if np.any(np.diff(self.edges) <= 0):
            raise ConfigInvalid("edges must be strictly increasing")
        if self.values.shape != (self.edges.size - 1,):
            raise ConfigInvalid("values must have one entry per bin")

    @classmethod
    def zero(cls, region: RegionSpec, nbins: int = 20) -> "ThermoForceField":
        if region.delta_thickness <= 0:
            raise ConfigInvalid("thermo force needs a buffer of finite thickness")
        return cls(np.linspace(0.0, region.delta_thickness, nbins + 1),
                   np.zeros(nbins))

    def force(self, q: np.ndarray, region: RegionSpec) -> np.ndarray:
        out = np.zeros_like(q)
        lab = region_labels(q, region)
        sel = lab == int(Region.DELTA_LAYER)
        if not np.any(sel):
            return out
        dist, normal, _ = boundary_distance(q[sel], region)
        idx = np.clip(np.searchsorted(self.edges, dist, side="right") - 1,
                      0, self.values.size - 1)
        mag = np.clip(self.values[idx], -self.max_magnitude, self.max_magnitude)
        out[sel] = mag[:, None] * normal
        return out


def compute_forces(
    q: np.ndarray,
    universe: UniverseSpec,
    potential: PairPotentialSpec,
    region: RegionSpec | None = None,
    tracer_mode: bool = False,
    force_cap: float = 200.0,
):
    """Pair forces, total potential energy, and smallest pair distance.

    In tracer mode only particles inside the subdomain or its buffer
    interact; outer particles stream freely as reservoir tracers.  Because
    a tracer can re-enter the buffer arbitrarily close to an interacting
    particle, per-particle forces are clamped to ``force_cap`` there and
    the overlap floor is not enforced; the capped repulsion resolves the
    overlap over a few steps instead of raising.  Closed-universe runs
    keep the strict floor check.
    """
    if potential.kind == IDEAL:
        return np.zeros_like(q), 0.0, np.inf
    if tracer_mode:
        if region is None:
            raise ConfigInvalid("tracer mode needs a region")
        active = region_labels(q, region) != int(Region.OUTER)
        f = np.zeros_like(q)
        fa, u, min_r = _kernels.forces(
            q[active], universe.box_lengths, universe.periodic,
            potential.r_cut, potential.epsilon, potential.sigma,
            potential.shift)
        with np.errstate(invalid="ignore", over="ignore"):
            norms = np.sqrt(np.sum(fa * fa, axis=1))
            big = norms > force_cap
            if np.any(big):
                fa[big] *= (force_cap / norms[big])[:, None]
        f[active] = fa
        if not np.all(np.isfinite(f)):
            raise NonFiniteForce(
                f"non-finite tracer-mode force at separation {min_r:g}")
        return f, u, min_r
    f, u, min_r = _kernels.forces(
        q, universe.box_lengths, universe.periodic, potential.r_cut,
        potential.epsilon, potential.sigma, potential.shift)
    if min_r < potential.floor or not np.all(np.isfinite(f)):
        raise NonFiniteForce(
            f"pair separation {min_r:g} below hard floor {potential.floor:g}"
        )
    return f, u, min_r


def kinetic_energy(state: SimState, universe: UniverseSpec) -> float:
    return float(np.sum(state.p * state.p) / (2.0 * universe.mass))


def _thermostat_coeffs(th: ThermostatSpec, dt: float, universe: UniverseSpec):
    T = th.temperature if th.temperature is not None else universe.temperature
    a = np.exp(-th.gamma * dt)
    b = np.sqrt((1.0 - a * a) * universe.mass * T)
    return a, b


def thermostat_step(
    state: SimState,
    universe: UniverseSpec,
    region: RegionSpec | None,
    config: EngineConfig,
    rng: np.random.Generator,
) -> SimState:
    """Exact Ornstein-Uhlenbeck momentum update on the masked particles."""
    th = config.thermostat
    if th.kind != THERMOSTAT_LANGEVIN or th.gamma == 0.0:
        return state
    if config.thermostat_mask == MASK_OUTSIDE_OMEGA:
        if region is None:
            raise ConfigInvalid("masked thermostat needs a region")
        mask = region_labels(state.q, region) != int(Region.INSIDE_OMEGA)
    else:
        mask = np.ones(state.n, dtype=bool)
    a, b = _thermostat_coeffs(th, config.dt, universe)
    p = state.p.copy()
    noise = rng.standard_normal(state.p.shape)
    p[mask] = a * p[mask] + b * noise[mask]
    return SimState(state.t, state.q, p)


def _vv_core(state, forces_prev, universe, region, potential, config,
             thermo_force, record_events):
    """One velocity-Verlet step given the forces at the current positions."""
    dt = config.dt
    m = universe.mass
    p_half = state.p + 0.5 * dt * forces_prev
    q_raw = state.q + (dt / m) * p_half
    events = []
    if record_events and region is not None:
        events = crossing_events(
            SimState(state.t, state.q, p_half),
            SimState(state.t + dt, q_raw, p_half),
            universe, region)
    q_new = wrap_positions(q_raw, universe)
    f_new, u_new, _ = compute_forces(q_new, universe, potential, region,
                                     config.tracer_mode,
                                     config.tracer_force_cap)
    if thermo_force is not None:
        f_new = f_new + thermo_force.force(q_new, region)
    p_new = p_half + 0.5 * dt * f_new
    return SimState(state.t + dt, q_new, p_new), f_new, u_new, events


def vv_step(
    state: SimState,
    universe: UniverseSpec,
    potential: PairPotentialSpec,
    config: EngineConfig,
    region: RegionSpec | None = None,
    thermo_force: ThermoForceField | None = None,
    record_events: bool = False,
):
    """One velocity-Verlet step; returns (new state, events)."""
    f0, _, _ = compute_forces(state.q, universe, potential, region,
                              config.tracer_mode, config.tracer_force_cap)
    if thermo_force is not None:
        f0 = f0 + thermo_force.force(state.q, region)
    new_state, _, _, events = _vv_core(state, f0, universe, region, potential,
                                       config, thermo_force, record_events)
    return new_state, events


def initial_ideal_gas(universe: UniverseSpec,
                      rng: np.random.Generator) -> SimState:
    """Uniform positions, Maxwell momenta at the universe temperature."""
    q = rng.uniform(0.0, 1.0, (universe.n_total, 3)) * universe.box_lengths
    p = rng.normal(0.0, np.sqrt(universe.mass * universe.temperature),
                   (universe.n_total, 3))
    return SimState(0.0, q, p)


def initial_lattice(universe: UniverseSpec, rng: np.random.Generator,
                    jitter: float = 0.05) -> SimState:
    """Jittered cubic lattice, Maxwell momenta; safe start for dense fluids."""
    n = universe.n_total
    grid = int(np.ceil(n ** (1.0 / 3.0)))
    cells = universe.box_lengths / grid
    idx = rng.permutation(grid ** 3)[:n]
    base = np.stack([idx // grid ** 2, (idx // grid) % grid, idx % grid],
                    axis=1)
    q = (base + 0.5) * cells + rng.uniform(-jitter, jitter, (n, 3)) * cells
    p = rng.normal(0.0, np.sqrt(universe.mass * universe.temperature), (n, 3))
    return SimState(0.0, np.mod(q, universe.box_lengths), p)


@dataclass
class RunResult:
    frames: list[SimState]
    frame_steps: list[int]
    events: list  # CrossingEvent, absolute times
    n_series: np.ndarray | None  # occupancy after every step, length steps+1
    energies: np.ndarray  # rows (t, kinetic, potential) at frame times
    final: SimState
    diagnostics: dict


def run(
    universe: UniverseSpec,
    potential: PairPotentialSpec,
    config: EngineConfig,
    initial: SimState,
    region: RegionSpec | None = None,
    thermo_force: ThermoForceField | None = None,
    observers: Sequence[Callable[[int, SimState], None]] = (),
) -> RunResult:
    """Integrate and record frames, occupancy, and boundary crossings.

    Deterministic for a fixed config seed.  Frames (with energies) are kept
    at frame_stride, always including step 0 and the last step; the
    occupancy series covers every step when a region is given.
    """
    if region is not None:
        region.validate_inside(universe)
    check_step_size(config, universe, region, potential)
    if thermo_force is not None and region is None:
        raise ConfigInvalid("thermo force needs a region")
    rng = stream(config.seed, "engine.thermostat")

    state = initial.copy()
    wrap_positions(state.q, universe)
    f, u, _ = compute_forces(state.q, universe, potential, region,
                             config.tracer_mode, config.tracer_force_cap)
    if thermo_force is not None:
        f = f + thermo_force.force(state.q, region)

    frames = [state.copy()]
    frame_steps = [0]
    energies = [(state.t, kinetic_energy(state, universe), u)]
    events: list = []
    n_series = None
    if region is not None:
        n_series = np.empty(config.steps + 1, dtype=np.int64)
        n_series[0] = occupancy(state.q, region)
    for obs in observers:
        obs(0, state)

    for step in range(1, config.steps + 1):
        state, f, u, evs = _vv_core(state, f, universe, region, potential,
                                    config, thermo_force,
                                    record_events=region is not None)
        events.extend(evs)
        state = thermostat_step(state, universe, region, config, rng)
        if region is not None:
            n_series[step] = occupancy(state.q, region)
        at_stride = config.frame_stride and step % config.frame_stride == 0
        if at_stride or step == config.steps:
            frames.append(state.copy())
            frame_steps.append(step)
            energies.append((state.t, kinetic_energy(state, universe), u))
            for obs in observers:
                obs(step, state)

    diagnostics = {
        "kernel_backend": _kernels.BACKEND,
        "n_events": len(events),
    }
    return RunResult(frames, frame_steps, events, n_series,
                     np.asarray(energies), state, diagnostics)


def offset_shell_volume(region: RegionSpec, d1: float, d2: float) -> float:
    """Volume of {x outside Omega : d1 <= dist(x, Omega) < d2}, exact.

    The outward offset of a box by distance d is the Minkowski sum with a
    ball: volume V + S d + pi (sum of edges) d^2 + (4/3) pi d^3.
    """
    e = region.omega_hi - region.omega_lo

    def vol(d):
        return (np.prod(e) + region.surface_area * d
                + np.pi * e.sum() * d * d + (4.0 / 3.0) * np.pi * d ** 3)

    return float(vol(d2) - vol(d1))


def inner_shell_volume(region: RegionSpec, d1: float, d2: float) -> float:
    """Volume of {x in Omega : d1 <= dist(x, boundary) < d2}, exact."""
    e = region.omega_hi - region.omega_lo

    def vol(d):
        r = np.clip(e - 2.0 * d, 0.0, None)
        return np.prod(r)

    return float(vol(d1) - vol(d2))


@dataclass
class DensityProbe:
    """Measured densities: per buffer bin, and the subdomain average."""

    edges: np.ndarray
    rho_delta: np.ndarray
    rho_omega: float


def measure_density(frames: Sequence[SimState], region: RegionSpec,
                    edges: np.ndarray) -> DensityProbe:
    """Histogram buffer-layer density by distance to the boundary."""
    edges = np.asarray(edges, dtype=float)
    counts = np.zeros(edges.size - 1)
    n_omega = 0
    for fr in frames:
        lab = region_labels(fr.q, region)
        n_omega += int(np.count_nonzero(lab == int(Region.INSIDE_OMEGA)))
        sel = lab == int(Region.DELTA_LAYER)
        if np.any(sel):
            dist, _, _ = boundary_distance(fr.q[sel], region)
            counts += np.histogram(dist, bins=edges)[0]
    shells = np.array([offset_shell_volume(region, edges[k], edges[k + 1])
                       for k in range(edges.size - 1)])
    nf = max(len(frames), 1)
    return DensityProbe(edges, counts / (shells * nf),
                        n_omega / (nf * region.volume))


@dataclass
class CalibrationResult:
    field: ThermoForceField
    deviations: list[float]
    converged: bool


def thermo_force_calibrate(
    simulate: Callable[[ThermoForceField], DensityProbe],
    initial_field: ThermoForceField,
    rho_star: float,
    iterations: int,
    gain: float = 1.0,
    tolerance: float = 0.03,
) -> CalibrationResult:
    """Iteratively flatten the buffer density profile toward rho_star.

    Each round subtracts gain * (density gradient) / rho_star from the
    force values, the standard fixed-point update for a thermodynamic
    force.  Returns the best field seen (smallest subdomain density
    deviation) together with the deviation history; converged means the
    deviation dropped below the tolerance within the allotted rounds.
    """
    if rho_star <= 0:
        raise ConfigInvalid("rho_star must be positive")
    if iterations < 1:
        raise ConfigInvalid("iterations must be at least 1")
    fld = initial_field
    centers = 0.5 * (fld.edges[:-1] + fld.edges[1:])
    best_field, best_dev = fld, np.inf
    deviations = []
    for _ in range(iterations):
        probe = simulate(fld)
        dev = abs(probe.rho_omega / rho_star - 1.0)
        deviations.append(float(dev))
        if dev < best_dev:
            best_field, best_dev = fld, dev
        if dev < tolerance:
            return CalibrationResult(best_field, deviations, True)
        grad = np.gradient(probe.rho_delta, centers)
        values = np.clip(fld.values - gain * grad / rho_star,
                         -fld.max_magnitude, fld.max_magnitude)
        fld = replace(fld, values=values)
    return CalibrationResult(best_field, deviations, False)
