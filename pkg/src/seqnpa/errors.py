"""Exception hierarchy shared by all modules."""


class SeqNPAError(Exception):
    """Base class for library errors."""


class ParseError(SeqNPAError):
    """A file could not be decoded."""


class SchemaError(SeqNPAError, ValueError):
    """A decoded document or constructor argument violates the schema."""


class ScenarioMismatch(SeqNPAError, ValueError):
    pass


class IndexOutOfBounds(SeqNPAError, IndexError):
    pass


class LevelTooSmall(SeqNPAError, ValueError):
    pass


class SolverError(SeqNPAError):
    """Base class for solver failures; carries the partial solution if any."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class Infeasible(SolverError):
    pass


class NumericalTrouble(SolverError):
    pass


class ShapeMismatch(SeqNPAError, ValueError):
    pass


class NotFlat(SeqNPAError):
    """Raised when extraction is requested on a solution without a rank loop."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class IllConditioned(SeqNPAError):
    pass


class RangeViolation(SeqNPAError, ValueError):
    pass


class NotProjective(SeqNPAError, ValueError):
    pass


class NotOptimal(SeqNPAError):
    pass


class MissingContext(SeqNPAError, ValueError):
    pass
