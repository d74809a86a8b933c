"""Finite-volume solver for the open-subdomain distribution hierarchy.

One spatial dimension, up to two tracked particles.  The closed-universe
reference problem evolves the full N-particle phase-space density on a
periodic interval.  The open-system problem evolves the ladder of
n-particle densities (n = 0 .. N) on a subdomain, coupled through
boundary-face fluxes: probability carried out of the subdomain by an
exiting particle moves from level n+1 to level n, and inbound
characteristics carry reservoir statistics upward from level n to level
n+1.  Two reservoir models are provided: a factorized product of the
current lower-level density with a fixed single-particle profile
(uniform in position, Maxwell in momentum), and the grand-canonical
ladder trace.

The discretization is first-order donor-cell upwind with Godunov
splitting, one sweep per coordinate in a fixed order (positions first,
then momenta).  Characteristic speeds never depend on the swept
coordinate, so every sweep is a convex update and the scheme preserves
positivity under the Courant bound.  Each boundary flux is applied as a
paired debit and credit built from the same floating-point products, so
the ladder total is conserved to round-off.  When the subdomain spans
the whole interval the ladder levels decouple and the update calls the
same routines as the closed-universe step, making the two bitwise
comparable.  The momentum domain is truncated with impermeable edges;
with Maxwell-type data at p_max = 8 sqrt(M T) the outermost cells hold
a fraction far below 1e-10 of the total, which every step reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import NamedTuple

import numpy as np

from .errors import (
    CFLViolation,
    ConfigInvalid,
    GridMismatch,
    NegativeDensity,
)

__all__ = [
    "FACTORIZED",
    "GRAND_CANONICAL",
    "SoftGaussianPotential",
    "GridSpec",
    "ClosureSpec",
    "FullField",
    "DensityField",
    "ErrorReport",
    "full_liouville_step",
    "hierarchy_step",
    "marginalize",
    "marginalize_all",
    "gaussian_packet",
    "pair_packet",
    "maxwell_profile",
    "gc_ladder",
    "restrict_full",
    "compare",
    "convergence_order",
    "run_full",
    "run_hierarchy",
]

FACTORIZED = "factorized"
GRAND_CANONICAL = "grand_canonical"

_COURANT_LIMIT = 0.9


@dataclass(frozen=True)
class SoftGaussianPotential:
    """Soft pair repulsion V(r) = epsilon exp(-r^2 / 2 width^2).

    Smooth and bounded, so the momentum-space characteristic speeds
    stay finite on any grid; ``epsilon = 0`` is the ideal (free) case.
    """

    epsilon: float = 0.0
    width: float = 0.1

    def __post_init__(self):
        if self.epsilon < 0 or self.width <= 0:
            raise ConfigInvalid("need epsilon >= 0 and width > 0")

    @property
    def ideal(self) -> bool:
        return self.epsilon == 0.0

    def energy(self, r):
        r = np.asarray(r, dtype=float)
        return self.epsilon * np.exp(-0.5 * (r / self.width) ** 2)

    def force(self, d):
        """Force on a particle displaced by ``d`` from its partner."""
        d = np.asarray(d, dtype=float)
        return (self.epsilon * d / self.width ** 2
                * np.exp(-0.5 * (d / self.width) ** 2))


@dataclass(frozen=True)
class GridSpec:
    """Phase-space grid: periodic interval [0, L] with subdomain [a, b].

    The subdomain edges must land on cell edges.  The momentum interval
    [-p_max, p_max] uses an even cell count so p = 0 is a face and
    every cell has a definite transport direction; cell centers are
    built as an exactly antisymmetric pair of half-axes.
    """

    length: float
    omega: tuple
    nx: int
    p_max: float
    np_cells: int
    dt: float
    mass: float = 1.0

    def __post_init__(self):
        if self.length <= 0 or self.p_max <= 0 or self.dt <= 0:
            raise ConfigInvalid("length, p_max, and dt must be positive")
        if self.mass <= 0:
            raise ConfigInvalid("mass must be positive")
        if self.nx < 2 or self.np_cells < 2:
            raise ConfigInvalid("need at least two cells per axis")
        if self.np_cells % 2:
            raise ConfigInvalid("momentum cell count must be even")
        a, b = float(self.omega[0]), float(self.omega[1])
        if not 0.0 <= a < b <= self.length:
            raise ConfigInvalid("subdomain must satisfy 0 <= a < b <= L")
        object.__setattr__(self, "omega", (a, b))
        for name, x in (("a", a), ("b", b)):
            cells = x / self.dx
            if abs(cells - round(cells)) > 1e-9:
                raise ConfigInvalid(
                    f"subdomain edge {name} = {x:g} is not on a cell edge")
        c = (self.p_max / self.mass) * self.dt / self.dx
        if c > _COURANT_LIMIT:
            raise CFLViolation(
                f"velocity Courant number {c:.3f} exceeds {_COURANT_LIMIT}")

    @property
    def dx(self) -> float:
        return self.length / self.nx

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.np_cells

    @property
    def cell_measure(self) -> float:
        return self.dx * self.dp

    @property
    def ia(self) -> int:
        return int(round(self.omega[0] / self.dx))

    @property
    def ib(self) -> int:
        return int(round(self.omega[1] / self.dx))

    @property
    def nxo(self) -> int:
        return self.ib - self.ia

    @property
    def omega_is_universe(self) -> bool:
        return self.ia == 0 and self.ib == self.nx

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def x_centers_omega(self) -> np.ndarray:
        return self.x_centers[self.ia:self.ib]

    @property
    def p_centers(self) -> np.ndarray:
        half = (np.arange(self.np_cells // 2) + 0.5) * self.dp
        return np.concatenate([-half[::-1], half])

    def geometry_key(self) -> tuple:
        """Everything two grids must share to be comparable (not dt)."""
        return (self.length, self.omega, self.nx, self.p_max,
                self.np_cells, self.mass)


@dataclass(frozen=True)
class ClosureSpec:
    """Reservoir model for inbound characteristics at the subdomain edge.

    Factorized mode weights an entering state by the current lower
    level density times a fixed single-particle profile: density
    ``rho_res``, Maxwell at ``temperature`` around ``drift_momentum``.
    Grand-canonical mode instead imposes the equilibrium ladder trace
    built from (gc_beta, gc_mu, gc_h).  ``reflect_incoming`` selects
    whether the reservoir profile is evaluated at the reflected
    momentum -p of the entering state, as the boundary-flux formula is
    written, or at +p; the two agree for any drift-free reservoir.
    """

    mode: str = FACTORIZED
    rho_res: float = 0.0
    temperature: float = 1.0
    drift_momentum: float = 0.0
    gc_beta: float | None = None
    gc_mu: float | None = None
    gc_h: float = 1.0
    reflect_incoming: bool = True

    def __post_init__(self):
        if self.mode not in (FACTORIZED, GRAND_CANONICAL):
            raise ConfigInvalid(f"unknown closure mode {self.mode!r}")
        if self.rho_res < 0:
            raise ConfigInvalid("reservoir density cannot be negative")
        if self.temperature <= 0:
            raise ConfigInvalid("reservoir temperature must be positive")
        if self.mode == GRAND_CANONICAL:
            if self.gc_beta is None or self.gc_mu is None:
                raise ConfigInvalid(
                    "grand-canonical closure needs gc_beta and gc_mu")
            if self.gc_beta <= 0 or self.gc_h <= 0:
                raise ConfigInvalid("gc_beta and gc_h must be positive")

    def reservoir_density(self, p, mass: float) -> np.ndarray:
        """Single-particle reservoir profile f1(p), per length-momentum."""
        p = np.asarray(p, dtype=float)
        mt = mass * self.temperature
        norm = self.rho_res / math.sqrt(2.0 * math.pi * mt)
        return norm * np.exp(-0.5 * (p - self.drift_momentum) ** 2 / mt)

    def outside_density(self, grid: GridSpec) -> float:
        """Mean particle density of the reservoir outside the subdomain."""
        if self.mode == FACTORIZED:
            return self.rho_res
        z = math.exp(self.gc_beta * self.gc_mu)
        return z * math.sqrt(
            2.0 * math.pi * grid.mass / self.gc_beta) / self.gc_h


def _gc_level_profiles(grid: GridSpec, beta: float, mu: float, h: float):
    """Vacuum weight and one-particle Maxwell trace of the ladder.

    Returns (w0, m) such that the ideal equilibrium ladder on the
    subdomain is f_0 = w0, f_1 = w0 m(p), f_2 = 0.5 w0 m(p1) m(p2);
    interacting levels carry an extra pair Boltzmann factor.  w0 uses
    the ideal normalization e^{-lambda} with the mean occupancy
    lambda = e^{beta mu} |Omega| sqrt(2 pi M / beta) / h.
    """
    a, b = grid.omega
    z = math.exp(beta * mu)
    lam = z * (b - a) * math.sqrt(2.0 * math.pi * grid.mass / beta) / h
    w0 = math.exp(-lam)
    m = (z / h) * np.exp(-beta * grid.p_centers ** 2 / (2.0 * grid.mass))
    return w0, m


def _gc_pair_base(w0: float, mp: np.ndarray) -> np.ndarray:
    """Momentum part 0.5 w0 m(p1) m(p2) of the two-particle trace.

    Shared by the ladder initializer and the boundary ghosts so the two
    agree floating point included.
    """
    return (0.5 * w0) * mp[:, None] * mp[None, :]


@dataclass
class FullField:
    """Closed-universe N-particle density on the periodic interval.

    Normalized: the density integrates to one over the whole phase
    space, and the transport step conserves that total.
    """

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        nx, npc = self.grid.nx, self.grid.np_cells
        if self.data.shape == (nx, npc):
            self.n_particles = 1
        elif self.data.shape == (nx, npc, nx, npc):
            self.n_particles = 2
        else:
            raise ConfigInvalid(
                f"full field shape {self.data.shape} does not match the grid")
        if abs(self.total_mass() - 1.0) > 1e-6:
            raise ConfigInvalid(
                f"full field mass {self.total_mass():.9f} is not one")

    def total_mass(self) -> float:
        return float(self.data.sum()) * self.grid.cell_measure ** (
            self.n_particles)

    def momentum_edge_fraction(self) -> float:
        d = self.data
        if self.n_particles == 1:
            edge = d[:, 0].sum() + d[:, -1].sum()
        else:
            edge = (d[:, 0].sum() + d[:, -1].sum()
                    + d[:, :, :, 0].sum() + d[:, :, :, -1].sum())
        total = d.sum()
        return float(edge / total) if total > 0 else 0.0

    def copy(self) -> "FullField":
        return FullField(self.grid, self.data.copy())


@dataclass
class DensityField:
    """Hierarchy ladder f_0, f_1[, f_2] on the subdomain grid.

    The ladder total is conserved by the open-system step but need not
    equal one: a truncated equilibrium ladder leaves out the higher
    occupancies.
    """

    grid: GridSpec
    f0: float
    f1: np.ndarray
    f2: np.ndarray | None = None
    diagnostics: dict = dataclass_field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.f0 = float(self.f0)
        self.f1 = np.asarray(self.f1, dtype=float)
        nxo, npc = self.grid.nxo, self.grid.np_cells
        if self.f1.shape != (nxo, npc):
            raise ConfigInvalid(
                f"f1 shape {self.f1.shape} does not match the subdomain grid")
        if self.f2 is not None:
            self.f2 = np.asarray(self.f2, dtype=float)
            if self.f2.shape != (nxo, npc, nxo, npc):
                raise ConfigInvalid(
                    f"f2 shape {self.f2.shape} does not match the grid")

    @property
    def n_max(self) -> int:
        return 1 if self.f2 is None else 2

    def level_masses(self) -> np.ndarray:
        m = self.grid.cell_measure
        masses = [self.f0, float(self.f1.sum()) * m]
        if self.f2 is not None:
            masses.append(float(self.f2.sum()) * m * m)
        return np.array(masses)

    def total_mass(self) -> float:
        return float(self.level_masses().sum())

    def momentum_edge_fraction(self) -> float:
        """Mass share of the outermost momentum cells across levels."""
        m = self.grid.cell_measure
        edge = float(self.f1[:, 0].sum() + self.f1[:, -1].sum()) * m
        if self.f2 is not None:
            edge += float(self.f2[:, 0].sum() + self.f2[:, -1].sum()
                          + self.f2[:, :, :, 0].sum()
                          + self.f2[:, :, :, -1].sum()) * m * m
        total = self.total_mass()
        return edge / total if total > 0 else 0.0

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.f0, self.f1.copy(),
                            None if self.f2 is None else self.f2.copy())


class ErrorReport(NamedTuple):
    """Per-level and total discrepancies of two fields on one grid."""

    l1: tuple
    linf: tuple
    total_l1: float
    relative_l1: float


# ---------------------------------------------------------------------------
# donor-cell sweeps
#
# Every sweep moves the target coordinate to the front and updates in
# flux form.  The Courant array always has size one along the swept
# axis (speeds depend only on transverse coordinates), which is what
# makes each column update a convex combination.

def _advect_periodic(f, c):
    cpos = np.maximum(c, 0.0)
    cneg = np.minimum(c, 0.0)
    flux = cpos * f + cneg * np.roll(f, -1, axis=0)
    return f - flux + np.roll(flux, 1, axis=0)


def _advect_wall(f, c):
    cpos = np.maximum(c, 0.0)
    cneg = np.minimum(c, 0.0)
    flux = (cpos * f)[:-1] + (cneg * f)[1:]
    out = f.copy()
    out[:-1] -= flux
    out[1:] += flux
    return out


def _advect_open(f, c, ghost_lo, ghost_hi):
    """Open ends: returns the update plus the four face transfers.

    Transfers are in cell-value units, the amount added to or removed
    from the end cells this step; multiply by one cell measure to get
    mass per cell of the remaining coordinates.
    """
    cpos = np.maximum(c, 0.0)
    cneg = np.minimum(c, 0.0)
    flux = (cpos * f)[:-1] + (cneg * f)[1:]
    out = f.copy()
    out[:-1] -= flux
    out[1:] += flux
    c_end = c[0]
    cp = np.maximum(c_end, 0.0)
    cn = np.maximum(-c_end, 0.0)
    outflow_lo = cn * f[0]
    inflow_lo = cp * ghost_lo
    outflow_hi = cp * f[-1]
    inflow_hi = cn * ghost_hi
    out[0] += inflow_lo - outflow_lo
    out[-1] += inflow_hi - outflow_hi
    return out, (outflow_lo, outflow_hi, inflow_lo, inflow_hi)


def _sweep(f, axis, c, mode, ghosts=None):
    g = np.moveaxis(f, axis, 0)
    cg = np.moveaxis(c, axis, 0)
    if mode == "periodic":
        out, faces = _advect_periodic(g, cg), None
    elif mode == "wall":
        out, faces = _advect_wall(g, cg), None
    elif mode == "open":
        out, faces = _advect_open(g, cg, *ghosts)
    else:
        raise ConfigInvalid(f"unknown sweep mode {mode!r}")
    return np.moveaxis(out, 0, axis), faces


def _check_force_cfl(fmax: float, grid: GridSpec, dt: float):
    c = fmax * dt / grid.dp
    if c > _COURANT_LIMIT:
        raise CFLViolation(
            f"force Courant number {c:.3f} exceeds {_COURANT_LIMIT}")


def _pair_force_grid(x: np.ndarray, potential: SoftGaussianPotential,
                     length: float | None) -> np.ndarray:
    """Force on the first particle over the (x1, x2) cell-center grid.

    ``length`` switches on the periodic minimum-image convention; None
    uses the direct displacement (subdomain interior).
    """
    d = x[:, None] - x[None, :]
    if length is not None:
        d = d - length * np.round(d / length)
    return potential.force(d)


# ---------------------------------------------------------------------------
# closed-universe reference solver

def _transport_full(data: np.ndarray, grid: GridSpec,
                    potential: SoftGaussianPotential, dt: float) -> np.ndarray:
    """Sweep sequence for the periodic closed-universe problem.

    Positions first, then momenta; used verbatim by the open-system
    step when the subdomain spans the universe, which keeps the two
    bitwise comparable.
    """
    c_v = (grid.p_centers / grid.mass) * (dt / grid.dx)
    if np.abs(c_v).max() > _COURANT_LIMIT:
        raise CFLViolation("velocity Courant number exceeds the limit")
    if data.ndim == 2:
        # one particle, no partner: free transport
        out, _ = _sweep(data, 0, c_v[None, :], "periodic")
        return out
    out, _ = _sweep(data, 0, c_v.reshape(1, -1, 1, 1), "periodic")
    out, _ = _sweep(out, 2, c_v.reshape(1, 1, 1, -1), "periodic")
    if not potential.ideal:
        f1_table = _pair_force_grid(grid.x_centers, potential, grid.length)
        _check_force_cfl(float(np.abs(f1_table).max()), grid, dt)
        c_f = f1_table[:, None, :, None] * (dt / grid.dp)
        out, _ = _sweep(out, 1, c_f, "wall")
        out, _ = _sweep(out, 3, -c_f, "wall")
    return out


def full_liouville_step(full: FullField,
                        potential: SoftGaussianPotential | None = None,
                        dt: float | None = None) -> FullField:
    """One upwind step of the closed-universe transport equation.

    Periodic in position, impermeable momentum edges; conserves the
    total to round-off and preserves positivity under the CFL bound.
    """
    if potential is None:
        potential = SoftGaussianPotential()
    step_dt = full.grid.dt if dt is None else float(dt)
    return FullField(full.grid,
                     _transport_full(full.data, full.grid, potential, step_dt))


# ---------------------------------------------------------------------------
# open-system hierarchy step

def hierarchy_step(ladder: DensityField, closure: ClosureSpec | None,
                   potential: SoftGaussianPotential | None = None,
                   dt: float | None = None) -> DensityField:
    """One step of the open-subdomain ladder.

    Position sweeps with open ends come first.  Outflow through a
    subdomain face is credited to the level below; inflow is drawn from
    a ghost state built by the closure from the pre-step fields and is
    debited from the level below, so the ladder total is conserved
    exactly.  The truncation at the top level keeps no coupling to the
    untracked level above: its loss and gain terms are both dropped.
    Momentum sweeps follow, carrying the mutual pair force plus the
    mean force of the reservoir outside the subdomain (closed form for
    the soft Gaussian potential against a uniform reservoir).  Raises
    CFLViolation if any characteristic, or the reservoir drain in
    factorized mode, is too fast for the step, and NegativeDensity if
    the update leaves a value below round-off of zero.
    """
    grid = ladder.grid
    if potential is None:
        potential = SoftGaussianPotential()
    step_dt = grid.dt if dt is None else float(dt)

    if grid.omega_is_universe:
        # no boundary: the levels decouple into closed problems
        f1 = _transport_full(ladder.f1, grid, potential, step_dt)
        f2 = (None if ladder.f2 is None
              else _transport_full(ladder.f2, grid, potential, step_dt))
        out = DensityField(grid, ladder.f0, f1, f2)
        out.diagnostics = {
            "f1_outflow": 0.0, "f1_inflow": 0.0,
            "f2_outflow": 0.0, "f2_inflow": 0.0,
            "momentum_edge_fraction": out.momentum_edge_fraction(),
        }
        return out

    if closure is None:
        raise ConfigInvalid("an open subdomain needs a closure")

    c_v = (grid.p_centers / grid.mass) * (step_dt / grid.dx)
    c_vmax = float(np.abs(c_v).max())
    if c_vmax > _COURANT_LIMIT:
        raise CFLViolation("velocity Courant number exceeds the limit")
    m = grid.cell_measure
    npc, nxo = grid.np_cells, grid.nxo
    f0_pre = ladder.f0
    f1_pre = ladder.f1

    # ghost states seen by inbound characteristics, from pre-step data
    if closure.mode == FACTORIZED:
        p_arg = -grid.p_centers if closure.reflect_incoming else grid.p_centers
        resv = closure.reservoir_density(p_arg, grid.mass)
        ghost1_lo = f0_pre * resv
        ghost1_hi = ghost1_lo
        if ladder.f2 is not None:
            g2_q1 = resv[:, None, None] * f1_pre[None, :, :]
            g2_q2 = f1_pre[:, :, None] * resv[None, None, :]
            ghost2 = {"q1": (g2_q1, g2_q1), "q2": (g2_q2, g2_q2)}
        # the factorized debit drains the lower level in proportion to
        # itself; keep the per-step drain fraction within the bound
        kappa = float((np.abs(c_v) * resv).sum()) * m
        drain = kappa * (2.0 if ladder.f2 is not None else 1.0)
        if drain > _COURANT_LIMIT * (1.0 - c_vmax):
            raise CFLViolation(
                f"reservoir inflow drains {drain:.3f} of a level per step")
    else:
        w0, mp = _gc_level_profiles(
            grid, closure.gc_beta, closure.gc_mu, closure.gc_h)
        ghost1_lo = w0 * mp
        ghost1_hi = ghost1_lo
        if ladder.f2 is not None:
            base = _gc_pair_base(w0, mp)
            a, b = grid.omega
            xo = grid.x_centers_omega
            if potential.ideal:
                g2_q1_lo = np.broadcast_to(base[:, None, :], (npc, nxo, npc))
                g2_q2_lo = np.broadcast_to(base[None, :, :], (nxo, npc, npc))
                ghost2 = {"q1": (g2_q1_lo, g2_q1_lo),
                          "q2": (g2_q2_lo, g2_q2_lo)}
            else:
                beta = closure.gc_beta
                b_lo = np.exp(-beta * potential.energy(xo - (a - grid.dx / 2)))
                b_hi = np.exp(-beta * potential.energy(xo - (b + grid.dx / 2)))
                ghost2 = {
                    "q1": (base[:, None, :] * b_lo[None, :, None],
                           base[:, None, :] * b_hi[None, :, None]),
                    "q2": (base[None, :, :] * b_lo[:, None, None],
                           base[None, :, :] * b_hi[:, None, None]),
                }

    transfers = {"f1_outflow": 0.0, "f1_inflow": 0.0,
                 "f2_outflow": 0.0, "f2_inflow": 0.0}
    d_f0 = 0.0
    d_f1 = np.zeros_like(f1_pre)

    # level-1 position sweep
    f1_new, faces = _sweep(ladder.f1, 0, c_v[None, :], "open",
                           ghosts=(ghost1_lo, ghost1_hi))
    of_lo, of_hi, if_lo, if_hi = faces
    out_mass = (float(of_lo.sum()) + float(of_hi.sum())) * m
    in_mass = (float(if_lo.sum()) + float(if_hi.sum())) * m
    d_f0 += out_mass - in_mass
    transfers["f1_outflow"] = out_mass
    transfers["f1_inflow"] = in_mass

    # level-2 position sweeps; the escaping or entering particle is the
    # swept one, the credit and debit land on the cell of the remaining
    # coordinates.  The first sweep reads the pristine pre-step array,
    # so its transfers are recorded separately: they are the ones exact
    # identities of the closure can be checked against.
    f2_new = None
    if ladder.f2 is not None:
        f2_new, faces = _sweep(ladder.f2, 0, c_v.reshape(1, -1, 1, 1),
                               "open", ghosts=ghost2["q1"])
        of_lo, of_hi, if_lo, if_hi = faces
        credit = (of_lo + of_hi).sum(axis=0) * m
        debit = (if_lo + if_hi).sum(axis=0) * m
        d_f1 += credit - debit
        transfers["f2_outflow_first_sweep"] = float(credit.sum()) * m
        transfers["f2_inflow_first_sweep"] = float(debit.sum()) * m
        transfers["f2_outflow"] += transfers["f2_outflow_first_sweep"]
        transfers["f2_inflow"] += transfers["f2_inflow_first_sweep"]

        f2_new, faces = _sweep(f2_new, 2, c_v.reshape(1, 1, 1, -1),
                               "open", ghosts=ghost2["q2"])
        of_lo, of_hi, if_lo, if_hi = faces
        credit = (of_lo + of_hi).sum(axis=2) * m
        debit = (if_lo + if_hi).sum(axis=2) * m
        d_f1 += credit - debit
        transfers["f2_outflow"] += float(credit.sum()) * m
        transfers["f2_inflow"] += float(debit.sum()) * m

    f0_new = f0_pre + d_f0
    f1_new = f1_new + d_f1

    # momentum sweeps: pair force plus the reservoir mean force
    a, b = grid.omega
    xo = grid.x_centers_omega
    rho_out = closure.outside_density(grid)
    if potential.ideal or rho_out == 0.0:
        f_res = np.zeros(nxo)
    else:
        # exact integral of the Gaussian pair force over a uniform
        # reservoir filling each side of the subdomain
        f_res = rho_out * (potential.energy(xo - a) - potential.energy(xo - b))
    if ladder.f2 is not None and not potential.ideal:
        fp = _pair_force_grid(xo, potential, None)
        force1 = fp + f_res[:, None]
        force2 = -fp + f_res[None, :]
        fmax = max(float(np.abs(force1).max()), float(np.abs(force2).max()))
    else:
        force1 = force2 = None
        fmax = float(np.abs(f_res).max()) if f_res.size else 0.0
    _check_force_cfl(fmax, grid, step_dt)

    if np.any(f_res != 0.0):
        c_r = f_res[:, None] * (step_dt / grid.dp)
        f1_new, _ = _sweep(f1_new, 1, c_r, "wall")
    if f2_new is not None and force1 is not None:
        c1 = force1[:, None, :, None] * (step_dt / grid.dp)
        c2 = force2[:, None, :, None] * (step_dt / grid.dp)
        f2_new, _ = _sweep(f2_new, 1, c1, "wall")
        f2_new, _ = _sweep(f2_new, 3, c2, "wall")

    out = DensityField(grid, f0_new, f1_new, f2_new)
    scale = max(abs(out.f0), float(np.abs(out.f1).max()),
                0.0 if out.f2 is None else float(np.abs(out.f2).max()))
    low = min(out.f0, float(out.f1.min()),
              0.0 if out.f2 is None else float(out.f2.min()))
    if low < -1e-12 * max(scale, 1e-300):
        raise NegativeDensity(
            f"minimum value {low:.3e} against field scale {scale:.3e}")
    out.diagnostics = dict(transfers)
    out.diagnostics["momentum_edge_fraction"] = out.momentum_edge_fraction()
    return out


# ---------------------------------------------------------------------------
# reduction of the closed-universe solution to the ladder

def marginalize(full: FullField, n: int):
    """Level-n density of the closed-universe field on the subdomain.

    Restricts n particles to the subdomain, integrates the others over
    its complement, and weighs by the number of ways to choose which
    labels are tracked.  Returns a float for n = 0 and arrays above.
    """
    grid = full.grid
    n_total = full.n_particles
    if not 0 <= n <= n_total:
        raise ConfigInvalid(
            f"level {n} not available from {n_total} particles")
    m = grid.cell_measure
    inside = np.zeros(grid.nx, dtype=bool)
    inside[grid.ia:grid.ib] = True
    binom = float(math.comb(n_total, n))
    d = full.data
    if n_total == 1:
        if n == 0:
            return float(d[~inside].sum()) * m
        return d[inside].copy()
    if n == 0:
        return float(d[~inside][:, :, ~inside, :].sum()) * m * m
    if n == 1:
        return binom * d[inside][:, :, ~inside, :].sum(axis=(2, 3)) * m
    return d[inside][:, :, inside, :].copy()


def marginalize_all(full: FullField) -> DensityField:
    """The whole ladder of the closed-universe field on the subdomain."""
    f0 = marginalize(full, 0)
    f1 = marginalize(full, 1)
    f2 = marginalize(full, 2) if full.n_particles == 2 else None
    return DensityField(full.grid, f0, f1, f2)


# ---------------------------------------------------------------------------
# initial conditions

def gaussian_packet(grid: GridSpec, x0: float, p0: float,
                    sigma_x: float, sigma_p: float,
                    time: float = 0.0) -> FullField:
    """Normalized one-particle Gaussian packet, optionally free-streamed.

    With ``time`` nonzero the profile is evaluated along the free
    characteristics x - p t / M with periodic wrap, the exact force
    free evolution of the t = 0 packet.
    """
    if sigma_x <= 0 or sigma_p <= 0:
        raise ConfigInvalid("packet widths must be positive")
    x = grid.x_centers[:, None]
    p = grid.p_centers[None, :]
    arg = x - x0 - (p / grid.mass) * time
    arg = arg - grid.length * np.round(arg / grid.length)
    data = np.exp(-0.5 * (arg / sigma_x) ** 2
                  - 0.5 * ((p - p0) / sigma_p) ** 2)
    data /= data.sum() * grid.cell_measure
    return FullField(grid, data)


def pair_packet(grid: GridSpec, packet_one: tuple,
                packet_two: tuple) -> FullField:
    """Symmetrized normalized product of two Gaussian packets.

    Each packet is (x0, p0, sigma_x, sigma_p).  The symmetrization in
    the particle labels is exact, additions commuting in floating
    point.
    """
    profiles = []
    for x0, p0, sx, sp in (packet_one, packet_two):
        if sx <= 0 or sp <= 0:
            raise ConfigInvalid("packet widths must be positive")
        x = grid.x_centers[:, None]
        p = grid.p_centers[None, :]
        dxw = x - x0
        dxw = dxw - grid.length * np.round(dxw / grid.length)
        profiles.append(np.exp(-0.5 * (dxw / sx) ** 2
                               - 0.5 * ((p - p0) / sp) ** 2))
    one, two = profiles
    data = 0.5 * (one[:, :, None, None] * two[None, None, :, :]
                  + two[:, :, None, None] * one[None, None, :, :])
    data /= data.sum() * grid.cell_measure ** 2
    return FullField(grid, data)


def maxwell_profile(grid: GridSpec, temperature: float,
                    drift: float = 0.0,
                    density: np.ndarray | None = None) -> FullField:
    """Normalized one-particle field, Maxwell in momentum.

    ``density`` shapes the position profile (uniform when omitted).
    """
    if temperature <= 0:
        raise ConfigInvalid("temperature must be positive")
    rho = (np.ones(grid.nx) if density is None
           else np.asarray(density, dtype=float))
    if rho.shape != (grid.nx,) or rho.min() < 0 or rho.max() == 0:
        raise ConfigInvalid("density must be a nonnegative profile over x")
    mt = grid.mass * temperature
    maxw = np.exp(-0.5 * (grid.p_centers - drift) ** 2 / mt)
    data = rho[:, None] * maxw[None, :]
    data /= data.sum() * grid.cell_measure
    return FullField(grid, data)


def gc_ladder(grid: GridSpec, beta: float, mu: float, h: float = 1.0,
              potential: SoftGaussianPotential | None = None,
              levels: int = 2) -> DensityField:
    """Equilibrium ladder of the reservoir statistics on the subdomain.

    Ideal levels are f_0 = w0, f_1 = w0 m(p), f_2 = 0.5 w0 m(p1) m(p2);
    with a pair potential the top level carries the pair Boltzmann
    factor (ideal normalization kept, so the interacting ladder is a
    smooth near-equilibrium field rather than an exact fixed point).
    The expressions match the ghost states built by the grand-canonical
    closure, floating point included.
    """
    if beta <= 0 or h <= 0:
        raise ConfigInvalid("beta and h must be positive")
    if levels not in (1, 2):
        raise ConfigInvalid("the ladder tracks one or two levels")
    w0, mp = _gc_level_profiles(grid, beta, mu, h)
    nxo, npc = grid.nxo, grid.np_cells
    f1 = np.broadcast_to(w0 * mp, (nxo, npc)).copy()
    if levels == 1:
        return DensityField(grid, w0, f1, None)
    base = _gc_pair_base(w0, mp)
    if potential is None or potential.ideal:
        f2 = np.broadcast_to(base[None, :, None, :],
                             (nxo, npc, nxo, npc)).copy()
    else:
        xo = grid.x_centers_omega
        boltz = np.exp(-beta * potential.energy(xo[:, None] - xo[None, :]))
        f2 = base[None, :, None, :] * boltz[:, None, :, None]
    return DensityField(grid, w0, f1, f2)


# ---------------------------------------------------------------------------
# comparison utilities

def restrict_full(full: FullField, coarse: GridSpec) -> FullField:
    """Block average of a refined closed-universe field onto a coarser grid."""
    fg = full.grid
    same = (fg.length == coarse.length and fg.omega == coarse.omega
            and fg.p_max == coarse.p_max and fg.mass == coarse.mass)
    if not same or fg.nx % coarse.nx or fg.np_cells % coarse.np_cells:
        raise GridMismatch("the refined grid does not nest in the coarse one")
    rx = fg.nx // coarse.nx
    rp = fg.np_cells // coarse.np_cells
    d = full.data
    if full.n_particles == 1:
        out = d.reshape(coarse.nx, rx, coarse.np_cells, rp).mean(axis=(1, 3))
    else:
        out = d.reshape(coarse.nx, rx, coarse.np_cells, rp,
                        coarse.nx, rx, coarse.np_cells, rp
                        ).mean(axis=(1, 3, 5, 7))
    return FullField(coarse, out)


def compare(candidate, reference) -> ErrorReport:
    """Discrepancy report of two fields of the same kind on one grid.

    The reference supplies the normalization of the relative error.
    Grids must share their geometry (time step aside); comparing fields
    of different depth or kind raises.
    """
    if isinstance(candidate, FullField) and isinstance(reference, FullField):
        if candidate.grid.geometry_key() != reference.grid.geometry_key():
            raise GridMismatch("fields live on different grids")
        if candidate.n_particles != reference.n_particles:
            raise GridMismatch("fields hold different particle numbers")
        m = candidate.grid.cell_measure ** candidate.n_particles
        diff = candidate.data - reference.data
        l1 = float(np.abs(diff).sum()) * m
        linf = float(np.abs(diff).max())
        ref = reference.total_mass()
        return ErrorReport((l1,), (linf,), l1,
                           l1 / ref if ref > 0 else math.inf)
    if isinstance(candidate, DensityField) and isinstance(
            reference, DensityField):
        if candidate.grid.geometry_key() != reference.grid.geometry_key():
            raise GridMismatch("ladders live on different grids")
        if candidate.n_max != reference.n_max:
            raise GridMismatch("ladders track different depths")
        m = candidate.grid.cell_measure
        gap0 = abs(candidate.f0 - reference.f0)
        l1s = [gap0]
        linfs = [gap0]
        diff = candidate.f1 - reference.f1
        l1s.append(float(np.abs(diff).sum()) * m)
        linfs.append(float(np.abs(diff).max()))
        if candidate.f2 is not None:
            diff = candidate.f2 - reference.f2
            l1s.append(float(np.abs(diff).sum()) * m * m)
            linfs.append(float(np.abs(diff).max()))
        total = float(sum(l1s))
        ref = reference.total_mass()
        return ErrorReport(tuple(l1s), tuple(linfs), total,
                           total / ref if ref > 0 else math.inf)
    raise ConfigInvalid("can only compare two fields of the same kind")


def convergence_order(coarse_error: float, fine_error: float) -> float:
    """Observed order from errors at a grid and its uniform refinement."""
    if coarse_error <= 0 or fine_error <= 0:
        raise ConfigInvalid("convergence order needs positive errors")
    return math.log2(coarse_error / fine_error)


# ---------------------------------------------------------------------------
# run helpers

def run_full(full: FullField, potential: SoftGaussianPotential | None = None,
             steps: int = 1, dt: float | None = None):
    """Advance the closed-universe field, recording the total each step."""
    if steps < 1:
        raise ConfigInvalid("need at least one step")
    masses = np.empty(steps + 1)
    masses[0] = full.total_mass()
    for k in range(steps):
        full = full_liouville_step(full, potential, dt)
        masses[k + 1] = full.total_mass()
    return full, masses


def run_hierarchy(ladder: DensityField, closure: ClosureSpec | None,
                  potential: SoftGaussianPotential | None = None,
                  steps: int = 1, dt: float | None = None):
    """Advance the ladder, recording totals and momentum-edge fractions."""
    if steps < 1:
        raise ConfigInvalid("need at least one step")
    masses = np.empty(steps + 1)
    edges = np.empty(steps + 1)
    masses[0] = ladder.total_mass()
    edges[0] = ladder.momentum_edge_fraction()
    for k in range(steps):
        ladder = hierarchy_step(ladder, closure, potential, dt)
        masses[k + 1] = ladder.total_mass()
        edges[k + 1] = ladder.momentum_edge_fraction()
    return ladder, masses, edges
