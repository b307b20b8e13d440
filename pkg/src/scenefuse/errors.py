"""Exception hierarchy and process exit codes.

Exit code contract for the CLI: 0 success, 1 usage/configuration error,
2 invariant violation detected at runtime, 3 numeric failure (non-finite
values, divergence).
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_NUMERIC = 3


class SceneFuseError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SceneFuseError):
    """Invalid configuration, arguments, or inputs. Maps to exit code 1."""


class ShapeError(ConfigurationError):
    """A tensor or sequence had an incompatible shape."""


class GenerationError(ConfigurationError):
    """A dataset specification is unsatisfiable or inconsistent."""


class MissingArtifactError(ConfigurationError):
    """A required artifact is absent; the message names the producing command."""


class InvariantError(SceneFuseError):
    """A documented runtime invariant was violated. Maps to exit code 2."""


class NumericError(SceneFuseError):
    """Non-finite values or numeric breakdown. Maps to exit code 3."""


class TrainingDivergenceError(NumericError):
    """Training produced a non-finite loss.

    Carries the last stable model state so callers can persist a usable
    checkpoint alongside the failure.
    """

    def __init__(self, message, last_stable=None, epoch=None):
        super().__init__(message)
        self.last_stable = last_stable
        self.epoch = epoch


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the documented process exit code."""
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, InvariantError):
        return EXIT_INVARIANT
    if isinstance(exc, ConfigurationError):
        return EXIT_USAGE
    return EXIT_USAGE
