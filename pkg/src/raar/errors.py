"""Exception hierarchy shared by every raar module."""


class RaarError(Exception):
    """Base class for all errors raised by raar."""


class NonFiniteInput(RaarError, ValueError):
    pass


# relevance
class DuplicateControlPoint(RaarError, ValueError):
    pass


class RelevanceOutOfRange(RaarError, ValueError):
    pass


class InsufficientControlPoints(RaarError, ValueError):
    pass


class DegenerateDistribution(RaarError, ValueError):
    pass


class DegenerateTarget(RaarError, ValueError):
    pass


class InvalidDomain(RaarError, ValueError):
    pass


# surrogate
class InvalidDistance(RaarError, ValueError):
    pass


class IllConditionedKernel(RaarError, ArithmeticError):
    pass


# objectives
class MissingRelevance(RaarError, ValueError):
    pass


# predictor
class DimensionError(RaarError, ValueError):
    pass


class PredictorProtocolError(RaarError):
    """An external predictor broke the line protocol.

    ``line`` carries the offending reply (or ``None`` on EOF).
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


class DeterminismError(RaarError):
    pass


class SchemaError(RaarError, ValueError):
    pass


class ParseError(RaarError, ValueError):
    def __init__(self, row, col, value):
        super().__init__(f"row {row}, column {col!r}: cannot parse {value!r} as a number")
        self.row = row
        self.col = col
        self.value = value


class InvalidK(RaarError, ValueError):
    pass


class UnknownPredictor(RaarError, KeyError):
    pass


# engine / harness / cli
class RowOutOfRange(RaarError, IndexError):
    pass


class PlanError(RaarError, ValueError):
    """Invalid experiment plan; ``path`` locates the offending entry."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ExperimentDegraded(RaarError):
    pass
