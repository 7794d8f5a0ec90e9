"""Exception hierarchy shared across the package."""


class ReproError(Exception):
    """Base class for all errors raised by repreli."""


class InvalidInput(ReproError, ValueError):
    pass


class ShapeError(ReproError, ValueError):
    pass


class DegenerateVector(ReproError, ValueError):
    """A vector whose norm is too small to normalize or measure an angle."""


class EnsembleTooSmall(ReproError, ValueError):
    pass


class ParameterError(ReproError, ValueError):
    pass


class PolarityError(ReproError, ValueError):
    pass


class TaskDataError(ReproError, ValueError):
    pass


class UndefinedCorrelation(ReproError, ValueError):
    """Rank correlation with a constant input has a zero denominator."""


class FormatError(ReproError, ValueError):
    pass


class CorruptFile(ReproError, ValueError):
    pass


class InvalidData(ReproError, ValueError):
    pass
