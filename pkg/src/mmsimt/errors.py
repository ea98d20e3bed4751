"""Exception hierarchy.

Each exception carries the process exit code the CLI maps it to:
1 for usage/config problems, 2 for data/format problems, 3 for numeric
failures.
"""


class SimtError(Exception):
    exit_code = 1


class UsageError(SimtError, ValueError):
    exit_code = 1


class ConfigError(SimtError, ValueError):
    exit_code = 1


class DimensionError(SimtError, ValueError):
    exit_code = 1


class GraphError(SimtError, RuntimeError):
    exit_code = 1


class VocabularyError(SimtError, KeyError):
    exit_code = 2

    def __str__(self):
        # KeyError quotes its message by default
        return str(self.args[0]) if self.args else ""


class IngestionError(SimtError):
    exit_code = 2


class FormatError(SimtError):
    exit_code = 2


class AlignmentError(SimtError, ValueError):
    exit_code = 2


class MetricError(SimtError, ValueError):
    exit_code = 2


class NumericError(SimtError, FloatingPointError):
    exit_code = 3


class TrainingDiverged(NumericError):
    """Raised when the loss becomes non-finite.

    ``params`` holds the last parameters that produced a finite loss, so the
    caller can still write a checkpoint.
    """

    def __init__(self, message, params=None, log=None):
        super().__init__(message)
        self.params = params
        self.log = log or []


class ScheduleError(UsageError):
    exit_code = 1


class PrefixError(UsageError):
    exit_code = 1
