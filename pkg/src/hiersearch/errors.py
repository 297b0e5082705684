"""Exception types shared across the package."""


class HierSearchError(Exception):
    """Base class for every error raised by this package."""


class FixedBitViolation(HierSearchError):
    """A fixed macro bit does not hold its declared value."""


class ValidationError(HierSearchError):
    """A candidate violates its search-space contract."""


class ArchMismatch(ValidationError):
    """Candidate arch_index disagrees with its decoded macro vector."""


class UnknownParam(ValidationError):
    """Candidate carries a value for a parameter the space does not declare."""


class OutOfBounds(ValidationError):
    """A value lies outside its declared bounds or breaks integrality."""


class MissingParam(ValidationError):
    """Candidate lacks a value for a declared parameter."""


class SpaceParseError(HierSearchError):
    """A space or landscape file is malformed; ``path`` names the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class UnknownFeature(HierSearchError):
    """Feature id absent from the Q-table (space/table desync)."""


class EmptyTable(HierSearchError):
    """Operation requires a non-empty Q-table."""


class KindMismatch(HierSearchError):
    """Gaussian state supplied for a non-continuous parameter, or missing for one."""


class EvaluatorError(HierSearchError):
    """Base class for failures raised by evaluator implementations."""


class ProtocolError(EvaluatorError):
    """External evaluator broke the wire protocol; ``payload`` holds the raw line."""

    def __init__(self, message: str, payload: str = ""):
        super().__init__(message)
        self.payload = payload


class EvalTimeout(EvaluatorError):
    """External evaluator produced no response within the timeout."""


class ChildExited(EvaluatorError):
    """External evaluator process terminated while a response was pending."""


class EvaluatorFailure(HierSearchError):
    """The search run aborted because its evaluator failed."""


class CheckpointIOError(HierSearchError):
    """Writing a checkpoint failed."""


class CorruptCheckpoint(HierSearchError):
    """Checkpoint file missing, truncated, or structurally invalid."""


class VersionMismatch(HierSearchError):
    """Checkpoint was written by an incompatible format version."""


class ConfigError(HierSearchError):
    """Run configuration is invalid; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key
