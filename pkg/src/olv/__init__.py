"""Simulation and verification toolkit for open particle subsystems.

A closed periodic universe evolved by molecular dynamics supplies ground
truth for a small open region: occupancy statistics, n-particle reduced
distributions, and boundary fluxes.  Companion solvers (a finite-volume
hierarchy integrator, a grand-canonical sampler, and a stochastic
insertion/deletion process) produce the same observables by independent
routes so each can be cross-validated against the others.
"""

from olv._kernels import BACKEND as KERNEL_BACKEND
from olv.errors import (
    BoxTooSmall,
    CFLViolation,
    ConfigInvalid,
    DisplacementTooLarge,
    GridMismatch,
    InconsistentLog,
    NegativeDensity,
    NonFiniteForce,
    OlvError,
    QuadratureNotConverged,
    TooFewEvents,
    TooFewInsertions,
    TooFewSamples,
    ZeroSeparation,
)
from olv.geometry import (
    CrossingEvent,
    Region,
    RegionSpec,
    SimState,
    UniverseSpec,
    crossing_events,
    occupancy,
    region_labels,
)
from olv.potentials import PairPotentialSpec

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "OlvError",
    "BoxTooSmall",
    "CFLViolation",
    "ConfigInvalid",
    "DisplacementTooLarge",
    "GridMismatch",
    "InconsistentLog",
    "NegativeDensity",
    "NonFiniteForce",
    "QuadratureNotConverged",
    "TooFewEvents",
    "TooFewInsertions",
    "TooFewSamples",
    "ZeroSeparation",
    "CrossingEvent",
    "Region",
    "RegionSpec",
    "SimState",
    "UniverseSpec",
    "crossing_events",
    "occupancy",
    "region_labels",
    "PairPotentialSpec",
    "__version__",
]
