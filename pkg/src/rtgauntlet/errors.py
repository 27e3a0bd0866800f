"""Exception types shared across the toolkit."""


class RTGauntletError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RTGauntletError):
    """A config block is internally inconsistent (e.g. S > K)."""


class ParameterError(RTGauntletError):
    """A sampled or user-supplied parameter is outside its valid range."""


class InputError(RTGauntletError):
    """An input tensor or label does not satisfy the operation's contract."""


class DataError(RTGauntletError):
    """Dataset is empty or malformed."""


class GradientPathError(RTGauntletError):
    """A non-differentiable transform sits on a gradient path without a surrogate."""


class DegenerateStatisticError(RTGauntletError):
    """A statistic is undefined for the given samples (e.g. zero mean gradient)."""


class TrainingError(RTGauntletError):
    """Training diverged (NaN loss) or could not start."""


class StageError(RTGauntletError):
    """A pipeline stage is missing one of its prerequisites."""
