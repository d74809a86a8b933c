"""Grand-canonical reference machinery: closed forms and Monte Carlo.

The equilibrium of a subdomain that freely exchanges particles with a
large reservoir is grand canonical.  This module supplies that ground
truth three ways, so the dynamical simulators elsewhere in the package
can be validated against it:

* closed-form laws (Poisson occupancy of an ideal system, its binomial
  finite-reservoir counterpart, the grand-potential identity),
* a Metropolis grand-canonical Monte Carlo sampler over a periodic
  cubic cell, and
* Widom test-particle insertion to measure the chemical potential of a
  closed run, closing the mu -> sampler -> dynamics loop.

All statistical weights are evaluated in log space: n! and h^{3n}
overflow double precision long before the physics becomes interesting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom, poisson

from . import _kernels
from .errors import ConfigInvalid, TooFewInsertions, TooFewSamples
from .potentials import IDEAL, PairPotentialSpec
from .stats import block_bootstrap

__all__ = [
    "GCParams",
    "GCMCRun",
    "WidomResult",
    "gc_weight",
    "log_gc_weight",
    "ideal_gas_pn",
    "binomial_pn",
    "gcmc_sample",
    "widom_mu",
    "grand_potential_check",
]


@dataclass(frozen=True)
class GCParams:
    """Thermodynamic state of the exchange ensemble.

    ``beta`` is the inverse temperature, ``mu`` the chemical potential,
    ``pressure`` the conjugate of the subdomain volume
    ``volume_omega``; ``h`` sets the phase-space cell and ``mass`` the
    kinetic integrals.
    """

    beta: float
    mu: float
    pressure: float = 0.0
    volume_omega: float = 1.0
    h: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        for name in ("beta", "volume_omega", "h", "mass"):
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    @property
    def thermal_wavelength(self) -> float:
        """lambda_T = h sqrt(beta / (2 pi M))."""
        return self.h * np.sqrt(self.beta / (2.0 * np.pi * self.mass))

    @property
    def activity(self) -> float:
        """z = e^{beta mu} / lambda_T^3, the ideal-gas density at mu."""
        return float(np.exp(self.beta * self.mu)
                     / self.thermal_wavelength ** 3)

    @property
    def poisson_mean(self) -> float:
        return self.activity * self.volume_omega


def log_gc_weight(n: int, energy: float, params: GCParams) -> float:
    """log of e^{-beta(H_n - mu n + P V)} / (n! h^{3n})."""
    if n < 0:
        raise ConfigInvalid("particle number cannot be negative")
    p = params
    return float(-p.beta * (energy - p.mu * n + p.pressure * p.volume_omega)
                 - gammaln(n + 1.0) - 3.0 * n * np.log(p.h))


def gc_weight(n: int, energy: float, params: GCParams) -> float:
    """Statistical weight of an n-particle microstate at energy H_n.

    Computed through the log to survive the factorial and h^{3n}
    factors; overflows saturate to inf rather than raising.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(log_gc_weight(n, energy, params)))


def ideal_gas_pn(params: GCParams, n_max: int | None = None) -> np.ndarray:
    """Occupancy law of an ideal open subdomain: Poisson(z |Omega|).

    Truncated at ``n_max`` (default: far enough that the neglected tail
    is below 1e-13; the tail beyond n is bounded by the first omitted
    term times 1/(1 - lam/n) once n > lam).
    """
    lam = params.poisson_mean
    if n_max is None:
        n_max = int(np.ceil(lam + 12.0 * np.sqrt(lam) + 30.0))
    return poisson.pmf(np.arange(n_max + 1), lam)


def binomial_pn(n_reservoir: int, fraction: float) -> np.ndarray:
    """Occupancy law of an ideal closed universe of N particles.

    A uniform particle sits inside the subdomain with probability equal
    to the volume fraction, independently of the others, so the count
    is Binomial(N, fraction); the combinatorial prefactor C(N, n) is
    the same multiplicity that weights the n-particle hierarchy.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigInvalid("volume fraction must lie in [0, 1]")
    return binom.pmf(np.arange(n_reservoir + 1), n_reservoir, fraction)


def grand_potential_check(params: GCParams, n_max: int | None = None) -> float:
    """Residual of the grand-potential identity P|Omega| = T ln Z.

    Z is summed numerically over particle number in log space,
    truncated at ``n_max`` (default 20 lam + 50, where the neglected
    tail is below the first omitted term times a convergent geometric
    factor, far below 1e-12 relative).  For an ideal system with P set
    to zT the residual vanishes.
    """
    lam = params.poisson_mean
    if n_max is None:
        n_max = int(np.ceil(20.0 * lam)) + 50
    n = np.arange(n_max + 1)
    log_z = logsumexp(n * np.log(lam) - gammaln(n + 1.0)) if lam > 0 else 0.0
    return float(params.pressure * params.volume_omega
                 - params.temperature * log_z)


# ---------------------------------------------------------------------------
# grand-canonical Monte Carlo


@dataclass
class GCMCRun:
    """Sampler output: occupancy series, checkpoints, diagnostics."""

    n_series: np.ndarray
    frames: list
    frame_sweeps: list
    attempts: dict
    accepts: dict

    def acceptance(self) -> dict:
        return {k: (self.accepts[k] / self.attempts[k]
                    if self.attempts[k] else float("nan"))
                for k in self.attempts}


def _box_energy_delta_insert(q, box, pot, trial):
    if pot.kind == IDEAL:
        return 0.0
    du = _kernels.trial_energies(q, box, (True, True, True), pot.r_cut,
                                 pot.epsilon, pot.sigma, pot.shift,
                                 pot.floor, trial)
    return float(du[0])


def _box_energy_particle(q, box, pot, idx):
    if pot.kind == IDEAL:
        return 0.0
    return float(_kernels.particle_energy(q, box, (True, True, True),
                                          pot.r_cut, pot.epsilon, pot.sigma,
                                          pot.shift, pot.floor, idx))


def gcmc_sample(potential: PairPotentialSpec, params: GCParams, sweeps: int,
                rng: np.random.Generator, *,
                moves_per_sweep: int | None = None,
                move_mix: tuple = (0.4, 0.3, 0.3),
                delta_max: float = 0.3,
                initial: np.ndarray | None = None,
                checkpoint_stride: int = 0) -> GCMCRun:
    """Metropolis sampling of the exchange ensemble in a periodic cube.

    The cell has volume ``params.volume_omega`` and periodic images on
    every axis; the interaction cutoff should not exceed half the edge
    (shorter-edge cells still sample correctly for at most one
    particle, which is how the two-state reduced checks run).  Moves
    are drawn as displace/insert/delete with probabilities
    ``move_mix``; acceptance follows the standard ratios, with the
    activity z absorbing the thermal wavelength:

        insert:  min(1, z V e^{-beta dU} / (n + 1))
        delete:  min(1, n e^{+beta u_i} / (z V))
        displace: min(1, e^{-beta dU})

    Occupancy is recorded after every sweep (``moves_per_sweep``
    attempts, default max(10, current n)); configurations are
    checkpointed every ``checkpoint_stride`` sweeps when nonzero.
    """
    box = np.full(3, params.volume_omega ** (1.0 / 3.0))
    z = params.activity
    beta = params.beta
    if abs(sum(move_mix) - 1.0) > 1e-12 or min(move_mix) < 0:
        raise ConfigInvalid("move mix must be nonnegative and sum to 1")

    q = (np.empty((0, 3)) if initial is None
         else np.array(initial, dtype=float, copy=True))
    if q.ndim != 2 or q.shape[1] != 3:
        raise ConfigInvalid("initial configuration must be (n, 3)")
    q %= box

    n_series = np.empty(sweeps + 1, dtype=np.int64)
    n_series[0] = q.shape[0]
    frames, frame_sweeps = [], []
    attempts = {"displace": 0, "insert": 0, "delete": 0}
    accepts = {"displace": 0, "insert": 0, "delete": 0}
    zv = z * params.volume_omega

    log_zv = np.log(zv) if zv > 0 else -np.inf

    def _metropolis(log_acc):
        if log_acc >= 0.0:
            return True
        with np.errstate(divide="ignore"):
            return np.log(rng.random()) < log_acc

    for sweep in range(1, sweeps + 1):
        moves = (moves_per_sweep if moves_per_sweep is not None
                 else max(10, q.shape[0]))
        for _ in range(moves):
            u = rng.random()
            if u < move_mix[0]:
                attempts["displace"] += 1
                n = q.shape[0]
                if n == 0:
                    continue
                i = int(rng.integers(n))
                old = q[i].copy()
                e_old = _box_energy_particle(q, box, potential, i)
                q[i] = (old + rng.uniform(-delta_max, delta_max, 3)) % box
                e_new = _box_energy_particle(q, box, potential, i)
                if _metropolis(-beta * (e_new - e_old)):
                    accepts["displace"] += 1
                else:
                    q[i] = old
            elif u < move_mix[0] + move_mix[1]:
                attempts["insert"] += 1
                n = q.shape[0]
                trial = rng.random(3) * box
                du = _box_energy_delta_insert(q, box, potential, trial)
                log_acc = log_zv - np.log(n + 1.0) - beta * du
                if np.isfinite(du) and _metropolis(log_acc):
                    q = np.vstack([q, trial])
                    accepts["insert"] += 1
            else:
                attempts["delete"] += 1
                n = q.shape[0]
                if n == 0:
                    continue
                i = int(rng.integers(n))
                u_i = _box_energy_particle(q, box, potential, i)
                if _metropolis(np.log(float(n)) - log_zv + beta * u_i):
                    q = np.delete(q, i, axis=0)
                    accepts["delete"] += 1
        n_series[sweep] = q.shape[0]
        if checkpoint_stride and sweep % checkpoint_stride == 0:
            frames.append(q.copy())
            frame_sweeps.append(sweep)

    return GCMCRun(n_series, frames, frame_sweeps, attempts, accepts)


# ---------------------------------------------------------------------------
# Widom insertion


@dataclass(frozen=True)
class WidomResult:
    mu: float
    error: float
    mu_ideal: float
    mu_excess: float
    insertions: int


def widom_mu(frames, potential: PairPotentialSpec, universe,
             params: GCParams, rng: np.random.Generator, *,
             insertions_per_frame: int = 200) -> WidomResult:
    """Chemical potential of a closed run by test-particle insertion.

    mu = T ln(rho lambda_T^3) - T ln < e^{-beta dU} >, the average taken
    over uniform ghost insertions into each frame.  The excess term's
    error comes from a block bootstrap over per-frame insertion
    averages, propagated through the logarithm.
    """
    frames = list(frames)
    total = len(frames) * insertions_per_frame
    if len(frames) < 4 or total < 100:
        raise TooFewInsertions(
            f"{len(frames)} frames x {insertions_per_frame} insertions "
            "cannot support an estimate (need >= 4 frames, >= 100 trials)")
    beta = params.beta
    box = np.asarray(universe.box_lengths, dtype=float)
    vol = float(np.prod(box))

    per_frame = np.empty(len(frames))
    n_particles = None
    for k, fr in enumerate(frames):
        q = fr.q if hasattr(fr, "q") else np.asarray(fr, dtype=float)
        if n_particles is None:
            n_particles = q.shape[0]
        trials = rng.random((insertions_per_frame, 3)) * box
        if potential.kind == IDEAL:
            du = np.zeros(insertions_per_frame)
        else:
            du = _kernels.trial_energies(q, box, universe.periodic,
                                         potential.r_cut, potential.epsilon,
                                         potential.sigma, potential.shift,
                                         potential.floor, trials)
        with np.errstate(over="ignore", under="ignore"):
            boltz = np.exp(-beta * du)
        boltz[~np.isfinite(du)] = 0.0
        per_frame[k] = boltz.mean()

    mean_b = per_frame.mean()
    if mean_b <= 0.0:
        raise TooFewInsertions("every insertion overlapped; no signal")
    T = params.temperature
    rho = n_particles / vol
    mu_ideal = T * np.log(rho * params.thermal_wavelength ** 3)
    mu_excess = -T * np.log(mean_b)
    boot = block_bootstrap(per_frame, lambda a: -T * np.log(a.mean()),
                           rng=np.random.default_rng(rng.integers(2 ** 63)))
    return WidomResult(float(mu_ideal + mu_excess), float(boot.error),
                       float(mu_ideal), float(mu_excess), total)
