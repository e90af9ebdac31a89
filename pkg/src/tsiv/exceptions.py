"""Exception and warning types shared across the package."""


class TsivError(Exception):
    """Base class for errors raised by this package."""


class DegenerateMoments(TsivError):
    """A moment matrix is numerically singular or otherwise unusable."""


class NonPositiveDefiniteWeight(TsivError):
    """A custom GMM weight matrix is not symmetric positive definite."""


class OmegaSingular(TsivError):
    """The estimated moment covariance cannot be inverted."""


class UnsupportedDimension(TsivError):
    """Operation defined only for a single instrument (q = 1)."""


class NoCompliers(TsivError):
    """A discrete instrument world has no compliers (zero first stage)."""


class MonotonicityViolated(TsivError):
    """Defiers are present where the complier-mean reduction was requested."""


class NoMatches(TsivError):
    """Every candidate pair exceeds the matching caliper."""


class LdNotPsd(TsivError):
    """An instrument correlation matrix is too indefinite to repair."""


class WeakInstrumentWarning(UserWarning):
    """First-stage association is weak; two-sample estimates shrink towards zero."""
