"""Exception types shared across the package."""


class FeastError(Exception):
    """Base class for all package errors."""


# --- behavior tree engine ---

class SchemaError(FeastError):
    """A serialized document does not conform to its schema."""


class InvariantError(FeastError):
    """A domain-type invariant would be violated."""


class UnknownParameter(FeastError):
    pass


class DomainError(FeastError):
    """Value outside a parameter's domain."""


class UnknownParent(FeastError):
    pass


class UnknownNode(FeastError):
    pass


class KindNotInsertable(FeastError):
    """Node kind outside the insertion whitelist."""


class NotRemovable(FeastError):
    """Attempted removal of a builtin node."""


class SkillMismatch(FeastError):
    """Diff requested between trees of different skills."""


class WorldUnavailable(FeastError):
    """World interface failed mid-tick."""


# --- gateway ---

class TranslationFailed(FeastError):
    """All translation attempts exhausted without a parseable update batch."""

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class AdapterUnavailable(FeastError):
    pass


class SynthesisFailed(FeastError):
    """No gesture program candidate ever parsed."""


# --- gestures ---

class EvalError(FeastError):
    """Gesture program evaluation failed (counts as a misclassification)."""


class UnknownGesture(FeastError):
    pass


class StreamEnded(FeastError):
    pass


# --- planner ---

class Unsolvable(FeastError):
    """Goal unreachable from the initial state."""


class PreconditionViolated(FeastError):
    pass


# --- world / session ---

class SafetyStopped(FeastError):
    """Motion refused because the robot is in the safety state."""


class WorldNotReady(FeastError):
    pass


class InvalidEventForPage(FeastError):
    pass


class TranscriptDiverged(FeastError):
    """Replay produced a record differing from the recorded transcript."""

    def __init__(self, message, seq=None):
        super().__init__(message)
        self.seq = seq
