"""Open-system dynamics with impulsive reservoir exchanges.

The subdomain evolves under its own Hamiltonian flow, interrupted at
random times by single-particle insertions and deletions whose rates
balance against the exchange-ensemble weights, so the stationary state
is grand canonical.  Between jumps the particles never leave: the walls
reflect.  This stochastic coupling is the discrete counterpart of the
continuous boundary-flux description used by the hierarchy solver, and
the two are compared through shared observables (occupancy law, edge
flux balance, momentum statistics).

Rate model (single-particle jumps only):

    birth:  nu * z * |Omega| * min(1, e^{-beta dU})   for a proposed
            (uniform position, Maxwell momentum) insertion,
    death:  nu * min(1, e^{+beta u_i})                per particle,

with u_i the interaction energy of particle i and dU the insertion
energy of the proposal.  The pair is in detailed balance with the
grand-canonical weights: min(1, e^{-beta dU}) equals
e^{-beta dU} min(1, e^{+beta dU}), which is the weight ratio of the
n+1 and n states once the uniform-position and Maxwell-momentum
proposal densities are divided out.  Jumps are realized by exact
thinning: candidate times arrive at the constant bound
nu (z |Omega| + n), which dominates the true total rate while n is
fixed, and each candidate either fires or is discarded with the ratio
of true to bound rate.  Every accepted jump is logged as a
:class:`BLEvent`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .ensembles import GCParams
from .errors import ConfigInvalid, TooFewEvents
from .potentials import IDEAL, PairPotentialSpec
from .stats import block_bootstrap

__all__ = [
    "BLKernelSpec",
    "BLState",
    "BLEvent",
    "BLRun",
    "FluxBalance",
    "bl_rates",
    "bl_step",
    "run_bl",
    "chunk_events",
    "flux_balance_check",
]

_NO_PBC = (False, False, False)


@dataclass(frozen=True)
class BLKernelSpec:
    """Exchange kernel: base rate, target ensemble, subdomain box.

    ``dt`` is the velocity-Verlet step used for the flow between jumps
    (for an ideal system the free flight is exact at any step size).
    ``birth_bias`` rescales the birth channel only; 1.0 is the
    detailed-balance kernel, anything else deliberately detunes
    equilibrium, which is how the flux detector is validated.
    """

    nu: float
    params: GCParams
    omega_lengths: tuple
    dt: float = 0.002
    birth_bias: float = 1.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigInvalid("base exchange rate must be positive")
        if self.dt <= 0:
            raise ConfigInvalid("integrator step must be positive")
        if self.birth_bias <= 0:
            raise ConfigInvalid("birth bias must be positive")
        lengths = np.asarray(self.omega_lengths, dtype=float)
        if lengths.shape != (3,) or np.any(lengths <= 0):
            raise ConfigInvalid("subdomain needs three positive edge lengths")
        object.__setattr__(self, "omega_lengths", lengths)
        vol = float(np.prod(lengths))
        if abs(vol - self.params.volume_omega) > 1e-9 * vol:
            raise ConfigInvalid(
                f"edge lengths give volume {vol:g} but the ensemble says "
                f"{self.params.volume_omega:g}")

    @property
    def birth_bound(self) -> float:
        """Upper bound on the birth rate (attained by an ideal system)."""
        return (self.nu * self.birth_bias
                * self.params.activity * self.params.volume_omega)


@dataclass
class BLState:
    """Phase points of the particles currently inside the subdomain."""

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1, 3)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        if self.q.shape != self.p.shape:
            raise ConfigInvalid("positions and momenta must match in shape")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def copy(self) -> "BLState":
        return BLState(self.t, self.q.copy(), self.p.copy())


class BLEvent(NamedTuple):
    """One accepted jump.  ``delta_u`` is the potential-energy change of
    the system (insertion energy for a birth, minus the removed
    particle's interaction energy for a death).  ``momentum`` is the
    Maxwell draw attached to a birth, None for a death.  ``ke_after``
    and ``u_after`` record the kinetic and potential energy right after
    the jump, which is what the fixed-occupancy energy-law checks
    consume."""

    time: float
    kind: str
    n_before: int
    n_after: int
    delta_u: float
    momentum: tuple | None
    ke_after: float
    u_after: float


class BLRun(NamedTuple):
    """Trajectory summary: occupancy on the sampling grid (length
    ``steps + 1``), the accepted jumps, optional phase-space frames, and
    the final state."""

    n_series: np.ndarray
    events: list
    frames: list
    frame_steps: list
    final: BLState
    dt_max: float
    steps: int


class FluxBalance(NamedTuple):
    """Per-edge net crossing rates of the occupancy ladder.  Edge k
    separates occupancies k and k+1; a birth from n crosses edge n
    upward, a death from n crosses edge n-1 downward."""

    edge_index: np.ndarray
    net_rates: np.ndarray
    net_errors: np.ndarray
    up_counts: np.ndarray
    down_counts: np.ndarray
    total_time: float
    n_sets: int


def _insertion_energy(q, kernel, potential, trial):
    if potential.kind == IDEAL or q.shape[0] == 0:
        return 0.0
    du = _kernels.trial_energies(q, kernel.omega_lengths, _NO_PBC,
                                 potential.r_cut, potential.epsilon,
                                 potential.sigma, potential.shift,
                                 potential.floor, trial)
    return float(du[0])


def _interaction_energy(q, kernel, potential, idx):
    if potential.kind == IDEAL or q.shape[0] <= 1:
        return 0.0
    return float(_kernels.particle_energy(q, kernel.omega_lengths, _NO_PBC,
                                          potential.r_cut, potential.epsilon,
                                          potential.sigma, potential.shift,
                                          potential.floor, idx))


def _total_potential(q, kernel, potential):
    if potential.kind == IDEAL or q.shape[0] <= 1:
        return 0.0
    total = 0.0
    for i in range(q.shape[0]):
        total += _interaction_energy(q, kernel, potential, i)
    return 0.5 * total


def _kinetic(p, mass):
    return float(np.sum(p * p)) / (2.0 * mass)


def bl_rates(state: BLState, kernel: BLKernelSpec,
             potential: PairPotentialSpec,
             trial: np.ndarray | None = None):
    """Birth rate and per-particle death rates at the given state.

    With ``trial`` (a proposed insertion position) the birth rate
    carries its acceptance factor; without one the upper bound
    nu z |Omega| is returned, which is the exact rate for an ideal
    system.  Returns ``(birth, deaths)`` with ``deaths`` of length n.
    """
    beta = kernel.params.beta
    birth = kernel.birth_bound
    if trial is not None:
        du = _insertion_energy(state.q, kernel, potential,
                               np.asarray(trial, dtype=float))
        birth *= float(np.exp(min(-beta * du, 0.0)))
    deaths = np.empty(state.n)
    for i in range(state.n):
        u_i = _interaction_energy(state.q, kernel, potential, i)
        deaths[i] = kernel.nu * float(np.exp(min(beta * u_i, 0.0)))
    return birth, deaths


def _reflect(q, p, lengths):
    """Fold positions into the box in place, flipping momenta.

    The fold is the triangle wave of period 2L, which is the exact
    specular-bounce trajectory for any excursion, however many wall
    hits it contains; the momentum component flips exactly on the
    descending branch of the wave.
    """
    for a in range(3):
        length = lengths[a]
        y = np.mod(q[:, a], 2.0 * length)
        over = y > length
        q[:, a] = np.where(over, 2.0 * length - y, y)
        p[over, a] = -p[over, a]


def _flow(state: BLState, kernel: BLKernelSpec,
          potential: PairPotentialSpec, duration: float) -> BLState:
    """Velocity-Verlet flow with reflecting walls over a time span."""
    if duration <= 0.0 or state.n == 0:
        out = state.copy()
        out.t = state.t + max(duration, 0.0)
        return out
    mass = kernel.params.mass
    lengths = kernel.omega_lengths
    q = state.q.copy()
    p = state.p.copy()
    ideal = potential.kind == IDEAL

    def forces(qq):
        if ideal:
            return np.zeros_like(qq)
        f, _, _ = _kernels.forces(qq, lengths, _NO_PBC, potential.r_cut,
                                  potential.epsilon, potential.sigma,
                                  potential.shift)
        return f

    n_full, rem = divmod(duration, kernel.dt)
    spans = [kernel.dt] * int(n_full)
    if rem > 1e-12 * kernel.dt:
        spans.append(rem)
    f = forces(q)
    for h in spans:
        p_half = p + 0.5 * h * f
        q = q + (h / mass) * p_half
        _reflect(q, p_half, lengths)
        f = forces(q)
        p = p_half + 0.5 * h * f
    return BLState(state.t + duration, q, p)


def bl_step(state: BLState, kernel: BLKernelSpec,
            potential: PairPotentialSpec, dt_max: float,
            rng: np.random.Generator):
    """Advance the open system by exactly ``dt_max``.

    Candidate jump times are drawn from the rate bound
    nu (bias z |Omega| + n); at each candidate the flow is integrated up
    to that time and a birth or death is attempted with its acceptance
    factor, so discarded candidates leave the dynamics untouched.
    Returns the new state and the list of accepted events.
    """
    if dt_max <= 0:
        raise ConfigInvalid("step span must be positive")
    t_end = state.t + dt_max
    cur = state
    events = []
    beta = kernel.params.beta
    mass = kernel.params.mass
    temperature = kernel.params.temperature
    sigma_p = np.sqrt(mass * temperature)
    while True:
        bound_birth = kernel.birth_bound
        bound_total = bound_birth + kernel.nu * cur.n
        wait = rng.exponential(1.0 / bound_total)
        if cur.t + wait >= t_end:
            cur = _flow(cur, kernel, potential, t_end - cur.t)
            return cur, events
        cur = _flow(cur, kernel, potential, wait)
        n = cur.n
        if rng.random() < bound_birth / bound_total:
            trial_q = rng.random(3) * kernel.omega_lengths
            trial_p = rng.normal(0.0, sigma_p, 3)
            du = _insertion_energy(cur.q, kernel, potential, trial_q)
            if rng.random() < np.exp(min(-beta * du, 0.0)):
                q = np.vstack([cur.q, trial_q[None, :]])
                p = np.vstack([cur.p, trial_p[None, :]])
                cur = BLState(cur.t, q, p)
                events.append(BLEvent(
                    cur.t, "birth", n, n + 1, du, tuple(trial_p),
                    _kinetic(p, mass),
                    _total_potential(q, kernel, potential)))
        elif n > 0:
            victim = int(rng.integers(n))
            u_i = _interaction_energy(cur.q, kernel, potential, victim)
            if rng.random() < np.exp(min(beta * u_i, 0.0)):
                q = np.delete(cur.q, victim, axis=0)
                p = np.delete(cur.p, victim, axis=0)
                cur = BLState(cur.t, q, p)
                events.append(BLEvent(
                    cur.t, "death", n, n - 1, -u_i, None,
                    _kinetic(p, mass),
                    _total_potential(q, kernel, potential)))


def run_bl(kernel: BLKernelSpec, potential: PairPotentialSpec,
           initial: BLState, steps: int, dt_max: float,
           rng: np.random.Generator, frame_stride: int = 0) -> BLRun:
    """Run the jump process for ``steps`` spans of ``dt_max``.

    Occupancy is sampled on the span grid (series length steps + 1);
    ``frame_stride`` > 0 additionally stores full phase-space copies
    every that many spans.
    """
    if steps < 1:
        raise ConfigInvalid("need at least one step")
    lengths = kernel.omega_lengths
    if initial.n and (np.any(initial.q < 0)
                      or np.any(initial.q > lengths[None, :])):
        raise ConfigInvalid("initial positions must lie inside the subdomain")
    state = initial.copy()
    n_series = np.empty(steps + 1, dtype=np.int64)
    n_series[0] = state.n
    events: list = []
    frames: list = []
    frame_steps: list = []
    for k in range(1, steps + 1):
        state, new_events = bl_step(state, kernel, potential, dt_max, rng)
        events.extend(new_events)
        n_series[k] = state.n
        if frame_stride and k % frame_stride == 0:
            frames.append((state.q.copy(), state.p.copy()))
            frame_steps.append(k)
    return BLRun(n_series, events, frames, frame_steps, state, dt_max, steps)


def chunk_events(events: Sequence[BLEvent], t0: float, t1: float,
                 n_chunks: int):
    """Split one run's events into equal time windows for resampling."""
    if t1 <= t0 or n_chunks < 1:
        raise ConfigInvalid("need a positive window count and time span")
    width = (t1 - t0) / n_chunks
    sets: list = [[] for _ in range(n_chunks)]
    for ev in events:
        if not t0 <= ev.time <= t1:
            raise ConfigInvalid(
                f"event at t={ev.time:g} outside [{t0:g}, {t1:g}]")
        idx = min(int((ev.time - t0) / width), n_chunks - 1)
        sets[idx].append(ev)
    return sets, width


def flux_balance_check(event_sets: Sequence[Sequence[BLEvent]],
                       duration: float, *, n_resamples: int = 200,
                       rng: np.random.Generator | None = None) -> FluxBalance:
    """Net crossing rate of every occupancy edge, with resampling errors.

    ``event_sets`` holds the jumps of repeated runs (or equal time
    windows of one long run, see :func:`chunk_events`), each spanning
    ``duration``.  In equilibrium every net rate is compatible with
    zero; a kernel whose birth channel is biased upward drags the
    low-occupancy edges positive when the runs start below the shifted
    target.  Raises :class:`TooFewEvents` when there are no jumps or
    fewer than four sets to resample.
    """
    if duration <= 0:
        raise ConfigInvalid("set duration must be positive")
    n_sets = len(event_sets)
    total = sum(len(s) for s in event_sets)
    if total == 0:
        raise TooFewEvents("no jump events to analyze")
    if n_sets < 4:
        raise TooFewEvents(f"need at least 4 event sets, got {n_sets}")
    top = 0
    for s in event_sets:
        for ev in s:
            top = max(top, ev.n_before, ev.n_after)
    n_edges = max(top, 1)
    up = np.zeros((n_sets, n_edges))
    down = np.zeros((n_sets, n_edges))
    for row, s in enumerate(event_sets):
        for ev in s:
            if ev.kind == "birth":
                up[row, ev.n_before] += 1
            else:
                down[row, ev.n_after] += 1
    net = up - down
    total_time = duration * n_sets

    def per_edge_rate(rows):
        return rows.sum(axis=0) / (duration * rows.shape[0])

    boot = block_bootstrap(net, per_edge_rate, n_resamples=n_resamples,
                           block_length=1, rng=rng)
    return FluxBalance(np.arange(n_edges), net.sum(axis=0) / total_time,
                       boot.error, up.sum(axis=0), down.sum(axis=0),
                       total_time, n_sets)
