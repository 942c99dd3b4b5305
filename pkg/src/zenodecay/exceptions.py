"""Exception hierarchy.

Every error carries the process exit status the command line maps it to.
"""


class ZenoDecayError(Exception):
    exit_status = 1


class ConfigError(ZenoDecayError, ValueError):
    """Invalid experiment configuration.

    ``errors`` holds ``(line_number, message)`` pairs; line numbers are
    ``None`` for problems not tied to a single line.
    """

    exit_status = 2

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [(None, errors)]
        self.errors = list(errors)
        msg = "; ".join(
            f"line {ln}: {m}" if ln is not None else m for ln, m in self.errors
        )
        super().__init__(msg)


class ValidationError(ZenoDecayError, ValueError):
    """Numerical input or result violates a stated invariant."""

    exit_status = 3


class ShapeError(ValidationError):
    pass


class RankDeficiencyError(ValidationError):
    pass


class ConditioningError(ValidationError):
    pass


class OutputError(ZenoDecayError, OSError):
    exit_status = 4


class ConvergenceError(ZenoDecayError, RuntimeError):
    exit_status = 5
