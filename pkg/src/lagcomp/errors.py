"""Exception types shared across the toolkit."""


class LagcompError(Exception):
    """Base class for all toolkit errors."""


class MalformedInput(LagcompError):
    """Input data violates a structural precondition (too few samples, bad shape)."""


class UnderdeterminedFit(LagcompError):
    """Fewer data points than basis functions: the regression has no unique answer."""


class InsufficientDemonstrations(LagcompError):
    """A distribution needs at least two demonstrations."""


class SingularConditioning(LagcompError):
    """Conditioning a deterministic primitive on a noiseless observation."""


class MappingError(LagcompError):
    """A channel is missing from the retarget joint map or initial-pose tables."""


class DegenerateSupport(LagcompError):
    """Foot anchors coincide: the support line is undefined."""


class ConfigurationError(LagcompError):
    """An operation was invoked with an unusable configuration (e.g. empty task library)."""


class ModelError(LagcompError):
    """A task model is internally unusable (e.g. empty time-modulation set)."""


class InfeasibleConstraints(LagcompError):
    """Equality constraints are inconsistent or unreachable within the velocity box."""


class AlignmentError(LagcompError):
    """Two trajectories share no overlapping support after realignment."""


class CsvParseError(LagcompError):
    """A trajectory CSV file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
