"""Closed universe, open subdomain, and particle bookkeeping.

The universe U is a periodic (or walled) box; the open subdomain Omega is an
axis-aligned box strictly inside it, surrounded by a buffer (Delta) layer of
configurable thickness.  Region membership uses half-open intervals
[lo, hi) on every axis so classification on a face is deterministic.  All
quantities are in reduced units (Boltzmann constant = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import ConfigInvalid, DisplacementTooLarge

Vec3 = np.ndarray  # shape (3,) float array


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=float)


class Region(IntEnum):
    INSIDE_OMEGA = 0
    DELTA_LAYER = 1
    OUTER = 2


# face ids, axis-major: low face then high face per axis
FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


class PhasePoint(NamedTuple):
    q: Vec3
    p: Vec3


@dataclass(frozen=True)
class UniverseSpec:
    """Closed universe: box, particle count, mass, target temperature."""

    box_lengths: np.ndarray
    n_total: int
    mass: float = 1.0
    temperature: float = 1.0
    periodic: tuple[bool, bool, bool] = (True, True, True)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "box_lengths", np.asarray(self.box_lengths, dtype=float))
        if self.box_lengths.shape != (3,) or not np.all(self.box_lengths > 0):
            raise ConfigInvalid("box_lengths must be three positive reals")
        if self.n_total < 0:
            raise ConfigInvalid("n_total must be nonnegative")
        if self.mass <= 0 or self.temperature <= 0:
            raise ConfigInvalid("mass and temperature must be positive")

    @property
    def volume(self) -> float:
        return float(np.prod(self.box_lengths))


@dataclass(frozen=True)
class RegionSpec:
    """Open subdomain Omega plus surrounding Delta layer."""

    omega_lo: np.ndarray
    omega_hi: np.ndarray
    delta_thickness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega_lo", np.asarray(self.omega_lo, dtype=float))
        object.__setattr__(self, "omega_hi", np.asarray(self.omega_hi, dtype=float))
        if self.omega_lo.shape != (3,) or self.omega_hi.shape != (3,):
            raise ConfigInvalid("omega bounds must be 3-vectors")
        if not np.all(self.omega_hi > self.omega_lo):
            raise ConfigInvalid("omega_hi must exceed omega_lo on every axis")
        if self.delta_thickness < 0:
            raise ConfigInvalid("delta_thickness must be nonnegative")

    def validate_inside(self, universe: UniverseSpec) -> None:
        """Omega strictly inside U, with the Delta shell also fitting."""
        lo, hi = self.omega_lo, self.omega_hi
        if not (np.all(lo > 0) and np.all(hi < universe.box_lengths)):
            raise ConfigInvalid("omega must be strictly inside the universe box")
        d = self.delta_thickness
        if np.any(lo - d <= 0) or np.any(hi + d >= universe.box_lengths):
            raise ConfigInvalid("delta layer must fit strictly inside the universe box")

    @property
    def volume(self) -> float:
        return float(np.prod(self.omega_hi - self.omega_lo))

    @property
    def surface_area(self) -> float:
        e = self.omega_hi - self.omega_lo
        return float(2.0 * (e[0] * e[1] + e[0] * e[2] + e[1] * e[2]))


@dataclass
class SimState:
    """Phase-space state of the whole universe: positions and momenta."""

    t: float
    q: np.ndarray  # (N, 3)
    p: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=float)
        self.p = np.ascontiguousarray(self.p, dtype=float)
        if self.q.shape != self.p.shape or self.q.ndim != 2 or self.q.shape[1] != 3:
            raise ConfigInvalid("q and p must both have shape (N, 3)")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def particle(self, i: int) -> PhasePoint:
        return PhasePoint(self.q[i].copy(), self.p[i].copy())

    def copy(self) -> "SimState":
        return SimState(self.t, self.q.copy(), self.p.copy())


class CrossingEvent(NamedTuple):
    particle: int
    direction: str  # "in" | "out"
    face: str  # one of FACES
    time: float  # absolute time of the crossing


def minimum_image(d: np.ndarray, universe: UniverseSpec) -> np.ndarray:
    """Map displacement vectors to their nearest periodic image."""
    d = np.array(d, dtype=float, copy=True)
    for a in range(3):
        if universe.periodic[a]:
            L = universe.box_lengths[a]
            d[..., a] -= L * np.round(d[..., a] / L)
    return d


def wrap_positions(q: np.ndarray, universe: UniverseSpec) -> np.ndarray:
    """Fold positions into [0, L) on periodic axes (in place)."""
    for a in range(3):
        if universe.periodic[a]:
            L = universe.box_lengths[a]
            q[..., a] %= L
    return q


def _inside_mask(q: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.all((q >= lo) & (q < hi), axis=-1)


def region_labels(q: np.ndarray, region: RegionSpec) -> np.ndarray:
    """Classify positions: 0 inside Omega, 1 Delta layer, 2 outer."""
    q = np.atleast_2d(q)
    inside = _inside_mask(q, region.omega_lo, region.omega_hi)
    d = region.delta_thickness
    expanded = _inside_mask(q, region.omega_lo - d, region.omega_hi + d)
    out = np.full(q.shape[0], int(Region.OUTER), dtype=np.int8)
    out[expanded] = int(Region.DELTA_LAYER)
    out[inside] = int(Region.INSIDE_OMEGA)
    return out


def region_of(q: Vec3, region: RegionSpec) -> Region:
    return Region(int(region_labels(np.asarray(q, dtype=float)[None, :], region)[0]))


def occupancy(state_or_q, region: RegionSpec) -> int:
    """Number of particles inside Omega."""
    q = state_or_q.q if isinstance(state_or_q, SimState) else np.atleast_2d(state_or_q)
    return int(np.count_nonzero(_inside_mask(q, region.omega_lo, region.omega_hi)))


def boundary_distance(q: np.ndarray, region: RegionSpec):
    """Distance to the Omega boundary and outward unit normal, vectorized.

    For points outside Omega the distance is Euclidean to the box and the
    normal points from the nearest boundary point toward the particle.  For
    points inside, distance is to the nearest face and the normal is that
    face's outward normal.
    """
    q = np.atleast_2d(q)
    lo, hi = region.omega_lo, region.omega_hi
    inside = _inside_mask(q, lo, hi)
    normal = np.zeros_like(q)
    dist = np.zeros(q.shape[0])

    if np.any(~inside):
        qo = q[~inside]
        proj = np.clip(qo, lo, hi)
        dv = qo - proj
        d = np.linalg.norm(dv, axis=1)
        d_safe = np.where(d > 0, d, 1.0)
        normal[~inside] = dv / d_safe[:, None]
        dist[~inside] = d
    if np.any(inside):
        qi = q[inside]
        margins = np.concatenate([qi - lo, hi - qi], axis=1)  # (m, 6): x-,y-,z-,x+,y+,z+
        k = np.argmin(margins, axis=1)
        dist[inside] = margins[np.arange(len(qi)), k]
        nrm = np.zeros_like(qi)
        axis = k % 3
        sign = np.where(k < 3, -1.0, 1.0)
        nrm[np.arange(len(qi)), axis] = sign
        normal[inside] = nrm
    return dist, normal, inside


def _segment_box_events(q0, d, lo, hi, idx, t0, dt, events):
    """Crossing times of the segment q0 + s*d, s in (0, 1], against [lo, hi)."""
    t_enter, t_exit = -np.inf, np.inf
    face_enter = face_exit = None
    for a in range(3):
        if d[a] == 0.0:
            if not (lo[a] <= q0[a] < hi[a]):
                return
            continue
        ta = (lo[a] - q0[a]) / d[a]
        tb = (hi[a] - q0[a]) / d[a]
        if ta < tb:
            near, far = ta, tb
            near_face, far_face = FACES[2 * a], FACES[2 * a + 1]
        else:
            near, far = tb, ta
            near_face, far_face = FACES[2 * a + 1], FACES[2 * a]
        if near > t_enter:
            t_enter, face_enter = near, near_face
        if far < t_exit:
            t_exit, face_exit = far, far_face
    if t_enter >= t_exit:
        return
    if 0.0 < t_enter <= 1.0:
        events.append(CrossingEvent(idx, "in", face_enter, t0 + t_enter * dt))
    if 0.0 < t_exit <= 1.0:
        events.append(CrossingEvent(idx, "out", face_exit, t0 + t_exit * dt))


def crossing_events(
    before: SimState, after: SimState, universe: UniverseSpec, region: RegionSpec
) -> list[CrossingEvent]:
    """Omega boundary crossings between two consecutive states.

    Motion within the step is treated as linear.  Positions in `after` must
    be the raw (pre-wrap) continuation of `before`, so the difference is the
    true displacement; crossings of periodic images of Omega are found by
    shifting the region box, never the trajectory.  Events are ordered by
    time.  Raises DisplacementTooLarge when a particle moved at least half
    the smallest box length in one interval: there the linear reconstruction
    becomes ambiguous, a sign the step size is too large.
    """
    dt = after.t - before.t
    if dt <= 0:
        raise ConfigInvalid("after state must be later than before state")
    disp = after.q - before.q
    limit = 0.5 * universe.box_lengths.min()
    bad = np.linalg.norm(disp, axis=1) >= limit
    if np.any(bad):
        raise DisplacementTooLarge(
            f"particles {np.nonzero(bad)[0][:8].tolist()} moved >= half the smallest box length"
        )

    lo, hi = region.omega_lo, region.omega_hi
    q0, q1 = before.q, before.q + disp
    # cheap prefilter: segment bounding box must touch the Omega boundary
    # shell in unwrapped coordinates or in a wrapped image of it
    seg_lo = np.minimum(q0, q1)
    seg_hi = np.maximum(q0, q1)
    candidates = []
    shifts_by_axis = []
    for a in range(3):
        sh = [0.0]
        if universe.periodic[a]:
            L = universe.box_lengths[a]
            sh.extend([-L, L])
        shifts_by_axis.append(np.array(sh))
    # overlap per axis per shift, combined across axes
    touch = np.zeros(before.n, dtype=bool)
    shift_sets = []
    for a in range(3):
        per_axis = []
        for s in shifts_by_axis[a]:
            per_axis.append((seg_hi[:, a] >= lo[a] + s) & (seg_lo[:, a] <= hi[a] + s))
        shift_sets.append(per_axis)
    any_a = [np.any(np.stack(per), axis=0) for per in shift_sets]
    touch = any_a[0] & any_a[1] & any_a[2]
    # fully-interior segments cannot produce events either: drop those whose
    # endpoints are both inside with margin exceeding the displacement
    both_in = _inside_mask(q0, lo, hi) & _inside_mask(q1, lo, hi)
    margin0 = np.minimum((q0 - lo).min(axis=1), (hi - q0).min(axis=1))
    margin1 = np.minimum((q1 - lo).min(axis=1), (hi - q1).min(axis=1))
    step_len = np.linalg.norm(disp, axis=1)
    deep = both_in & (margin0 > step_len) & (margin1 > step_len)
    candidates = np.nonzero(touch & ~deep)[0]

    events: list[CrossingEvent] = []
    for i in candidates:
        for sx in shifts_by_axis[0]:
            if not (seg_hi[i, 0] >= lo[0] + sx and seg_lo[i, 0] <= hi[0] + sx):
                continue
            for sy in shifts_by_axis[1]:
                if not (seg_hi[i, 1] >= lo[1] + sy and seg_lo[i, 1] <= hi[1] + sy):
                    continue
                for sz in shifts_by_axis[2]:
                    if not (seg_hi[i, 2] >= lo[2] + sz and seg_lo[i, 2] <= hi[2] + sz):
                        continue
                    shift = np.array([sx, sy, sz])
                    _segment_box_events(
                        q0[i], disp[i], lo + shift, hi + shift, int(i), before.t, dt, events
                    )
    events.sort(key=lambda e: (e.time, e.particle))
    return events
