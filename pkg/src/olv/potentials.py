"""Pair potentials: ideal (none), truncated-shifted Lennard-Jones, WCA.

Interacting potentials are shifted so the energy vanishes at the cutoff and
the force is identically zero beyond it.  Separations below a hard floor
(default 0.5 sigma) raise ZeroSeparation: at any sane temperature such
configurations are unreachable and signal a broken integration step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, ZeroSeparation
from .geometry import Region, RegionSpec, UniverseSpec, minimum_image, region_labels

IDEAL = "ideal"
LENNARD_JONES = "lennard_jones"
WCA = "wca"


def _lj_raw(r, epsilon, sigma):
    s6 = (sigma / np.asarray(r, dtype=float)) ** 6
    return 4.0 * epsilon * (s6 * s6 - s6)


@dataclass(frozen=True)
class PairPotentialSpec:
    kind: str = IDEAL
    epsilon: float = 1.0
    sigma: float = 1.0
    cutoff: float | None = None  # lennard_jones default 2.5 sigma; wca fixed
    hard_floor: float = 0.5  # in units of sigma

    def __post_init__(self):
        if self.kind not in (IDEAL, LENNARD_JONES, WCA):
            raise ConfigInvalid(f"unknown potential kind {self.kind!r}")
        if self.kind == IDEAL:
            return
        if self.epsilon <= 0 or self.sigma <= 0:
            raise ConfigInvalid("epsilon and sigma must be positive")
        wca_rc = 2.0 ** (1.0 / 6.0) * self.sigma
        if self.kind == WCA:
            if self.cutoff is not None and not np.isclose(self.cutoff, wca_rc):
                raise ConfigInvalid("wca cutoff is fixed at 2^(1/6) sigma")
            object.__setattr__(self, "cutoff", wca_rc)
        elif self.cutoff is None:
            object.__setattr__(self, "cutoff", 2.5 * self.sigma)
        if self.cutoff <= self.hard_floor * self.sigma:
            raise ConfigInvalid("cutoff must exceed the hard floor")

    @property
    def r_cut(self) -> float:
        return 0.0 if self.kind == IDEAL else float(self.cutoff)

    @property
    def shift(self) -> float:
        """Unshifted energy at the cutoff, subtracted from every pair."""
        if self.kind == IDEAL:
            return 0.0
        return float(_lj_raw(self.r_cut, self.epsilon, self.sigma))

    @property
    def floor(self) -> float:
        return self.hard_floor * self.sigma


def pair_energy(spec: PairPotentialSpec, r):
    """Shifted pair energy at separation r (scalar or array)."""
    r = np.asarray(r, dtype=float)
    if spec.kind == IDEAL:
        return np.zeros_like(r) if r.ndim else 0.0
    if np.any(r < spec.floor):
        raise ZeroSeparation(f"separation below hard floor {spec.floor:g}")
    u = np.where(r < spec.r_cut, _lj_raw(np.maximum(r, spec.floor), spec.epsilon, spec.sigma) - spec.shift, 0.0)
    return float(u) if u.ndim == 0 else u


def dv_dr(spec: PairPotentialSpec, r):
    """Radial derivative of the pair energy (shift does not affect it)."""
    r = np.asarray(r, dtype=float)
    if spec.kind == IDEAL:
        return np.zeros_like(r) if r.ndim else 0.0
    if np.any(r < spec.floor):
        raise ZeroSeparation(f"separation below hard floor {spec.floor:g}")
    s6 = (spec.sigma / r) ** 6
    d = np.where(r < spec.r_cut, -24.0 * spec.epsilon * (2.0 * s6 * s6 - s6) / r, 0.0)
    return float(d) if d.ndim == 0 else d


def pair_force(spec: PairPotentialSpec, rvec):
    """Force on particle i for separation vector rvec = q_i - q_j.

    Zero at and beyond the cutoff; antisymmetric under i <-> j by
    construction.  rvec may be (3,) or (m, 3).
    """
    rvec = np.atleast_2d(np.asarray(rvec, dtype=float))
    if spec.kind == IDEAL:
        f = np.zeros_like(rvec)
        return f[0] if rvec.shape[0] == 1 else f
    r2 = np.sum(rvec * rvec, axis=1)
    r = np.sqrt(r2)
    if np.any(r < spec.floor):
        raise ZeroSeparation(f"separation below hard floor {spec.floor:g}")
    s6 = (spec.sigma**2 / r2) ** 3
    coef = np.where(r < spec.r_cut, 24.0 * spec.epsilon * (2.0 * s6 * s6 - s6) / r2, 0.0)
    f = coef[:, None] * rvec
    return f[0] if f.shape[0] == 1 else f


def _pair_matrix(spec: PairPotentialSpec, q: np.ndarray, universe: UniverseSpec):
    """Upper-triangle pair separations under minimum image."""
    n = q.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    d = minimum_image(q[iu] - q[ju], universe)
    r = np.linalg.norm(d, axis=1)
    return iu, ju, r


def total_potential(spec: PairPotentialSpec, q: np.ndarray, universe: UniverseSpec) -> float:
    """Total potential energy, summed over i < j with minimum image."""
    if spec.kind == IDEAL or q.shape[0] < 2:
        return 0.0
    _, _, r = _pair_matrix(spec, q, universe)
    r = r[r < spec.r_cut]
    if r.size and r.min() < spec.floor:
        raise ZeroSeparation(f"separation below hard floor {spec.floor:g}")
    return float(np.sum(_lj_raw(r, spec.epsilon, spec.sigma) - spec.shift))


def split_potential(
    spec: PairPotentialSpec, q: np.ndarray, universe: UniverseSpec, region: RegionSpec
):
    """Split the total energy by pair location relative to Omega.

    Returns (V_in, V_out, V_cross): both members inside Omega, both not
    inside, and mixed pairs.  The three parts sum to total_potential.
    """
    if spec.kind == IDEAL or q.shape[0] < 2:
        return 0.0, 0.0, 0.0
    iu, ju, r = _pair_matrix(spec, q, universe)
    mask = r < spec.r_cut
    iu, ju, r = iu[mask], ju[mask], r[mask]
    if r.size and r.min() < spec.floor:
        raise ZeroSeparation(f"separation below hard floor {spec.floor:g}")
    u = _lj_raw(r, spec.epsilon, spec.sigma) - spec.shift
    inside = region_labels(q, region) == int(Region.INSIDE_OMEGA)
    n_in = inside[iu].astype(int) + inside[ju].astype(int)
    v_in = float(np.sum(u[n_in == 2]))
    v_out = float(np.sum(u[n_in == 0]))
    v_cx = float(np.sum(u[n_in == 1]))
    return v_in, v_out, v_cx
