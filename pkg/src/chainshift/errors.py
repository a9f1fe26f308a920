"""Exception hierarchy used across the package."""


class ChainshiftError(Exception):
    """Base class for all package-specific errors."""


class NonStochasticMatrix(ChainshiftError):
    """A transition row does not sum to one (or has negative entries)."""


class NotIrreducible(ChainshiftError):
    """The positive-transition digraph is not strongly connected."""


class NotStationary(ChainshiftError):
    """A supplied measure fails the stationarity equations."""


class UnknownState(ChainshiftError):
    """A state label referenced by a measure or config is not in the chain."""


class WindowNotMaterialized(ChainshiftError):
    """A requested index lies outside the materialized trajectory window."""


class FixtureExhausted(WindowNotMaterialized):
    """A fixed-path trajectory cannot be extended beyond its recorded window."""


class NonIntegerBallCount(ChainshiftError):
    """The integer feasibility condition fails, so ball counts are fractional."""


class InfeasibleTarget(ChainshiftError):
    """The target measure cannot be embedded from the given start state."""


class TargetChargesStart(ChainshiftError):
    """The target puts mass on the start state; only the Dirac case is allowed."""


class FrontierMassPresent(ChainshiftError):
    """Transport mass crosses the window boundary where none is allowed."""


class NotACrossing(ChainshiftError):
    """The supplied quadruple is not a crossing of the transport rule."""


class BudgetExceeded(ChainshiftError):
    """A lattice Green-function request exceeds the convolution budget."""


class NotYetVisitable(ChainshiftError):
    """Green-function ratio undefined because the denominator is still zero."""


class ExcessCensoring(ChainshiftError):
    """Too many replicas were censored for the estimate to be meaningful."""


class InvalidAlternative(ChainshiftError):
    """An alternative solver failed the shifted-law validity check."""


class ConfigError(ChainshiftError):
    """An experiment config file is malformed or out of documented ranges."""


class UndecidableSign(ChainshiftError):
    """An exact sign decision could not be certified at maximum precision."""
