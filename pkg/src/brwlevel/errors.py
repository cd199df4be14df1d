"""Exception types raised across the package."""


class BRWError(Exception):
    """Base class for all package errors."""


class TiltOutsideDomain(BRWError):
    pass


class ClassificationInconclusive(BRWError):
    pass


class DegenerateSpec(BRWError):
    pass


class RegimeMismatch(BRWError):
    pass


class UnsupportedRegime(BRWError):
    pass


class NoBracket(BRWError):
    pass


class PopulationCapExceeded(BRWError):
    pass


class NonLatticeStep(BRWError):
    pass


class EmptyLevelSet(BRWError):
    pass


class ScheduleTooShort(BRWError):
    pass


class ScheduleInvariantError(BRWError):
    pass


class ConfigParseError(BRWError):
    pass
