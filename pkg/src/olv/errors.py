"""Exception and warning types shared across the toolkit."""


class OlvError(Exception):
    """Base class for toolkit errors."""


class ConfigInvalid(OlvError):
    """Scenario configuration failed validation."""


class DisplacementTooLarge(OlvError):
    """A particle moved at least half a box length in a single step."""


class ZeroSeparation(OlvError):
    """Pair separation fell below the hard floor of the potential."""


class BoxTooSmall(OlvError):
    """Interaction cutoff incompatible with the periodic box size."""


class NonFiniteForce(OlvError):
    """A force evaluation produced NaN or infinity."""


class TooFewSamples(OlvError):
    """Not enough decorrelated samples to estimate anything."""


class TooFewEvents(OlvError):
    """Not enough events on an edge for a statistical verdict."""


class TooFewInsertions(OlvError):
    """Not enough trial insertions for a chemical-potential estimate."""


class InconsistentLog(OlvError):
    """Crossing-event log disagrees with the occupancy series."""


class QuadratureNotConverged(OlvError):
    """Adaptive quadrature failed to reach its tolerance."""


class CFLViolation(OlvError):
    """A finite-volume step would exceed the stability limit."""


class NegativeDensity(OlvError):
    """A density field went negative: flux-splitting bug."""


class GridMismatch(OlvError):
    """Two runs being compared do not live on compatible grids."""


class EmptyConditioningBin(UserWarning):
    """A conditioning slice received no samples (reported, not fatal)."""
