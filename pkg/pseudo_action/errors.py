class PseudoActionError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(PseudoActionError, ValueError):
    """
    Bad shapes, unknown config keys or out-of-range values.

    Examples:
        >>> from pseudo_action.errors import ConfigurationError
        >>> isinstance(ConfigurationError("repeat must be >= 1"), ValueError)
        True
    """


class ScheduleAlignmentError(ConfigurationError):
    """A control schedule does not line up with the integration grid."""


class NonFiniteError(PseudoActionError, ArithmeticError):
    """NaN or Inf where a finite number is required."""


class TrainingDivergedError(NonFiniteError):
    """A training loss became non-finite."""


class IntegrityError(PseudoActionError, ValueError):
    """Replay data violates its chaining or lifecycle rules."""


class InsufficientDataError(PseudoActionError, LookupError):
    """The replay buffer holds no window that can be sampled."""


class ContractViolationError(PseudoActionError, ValueError):
    """An operation was handed data it is not allowed to train on."""


class InternalError(PseudoActionError, RuntimeError):
    """Inconsistent internal state, e.g. activations from another network."""


class SchemaError(PseudoActionError, ValueError):
    """A metrics or archive file does not have the expected layout."""


class InvalidActionError(PseudoActionError, ValueError):
    """An environment was handed an action outside its action space."""
