"""
Exception hierarchy for the MLMC library.

Every error raised on purpose by the library derives from MlmcError so the
command line can report it as a one-line message and exit non-zero.
"""

from typing import List, Optional


class MlmcError(Exception):
    """Base class for all library errors."""


class InputError(MlmcError, ValueError):
    """Invalid argument: dimension or length mismatch, bad step size, odd M, ..."""


class UnsupportedError(MlmcError):
    """Requested combination has no implementation (oracle, extrapolation order, ...)."""


class StateError(MlmcError):
    """Statistics were read before they are defined (e.g. V-hat with N < 2)."""


class ConfigError(MlmcError):
    """Experiment configuration file or command-line options are invalid."""


class CalibrationError(MlmcError):
    """Pilot corrections are statistically indistinguishable from zero."""


class BudgetExceededError(MlmcError):
    """Exact enumeration would visit more leaves than the configured budget."""

    def __init__(self, leaves: int, budget: int):
        super().__init__(
            f"enumeration needs {leaves} leaves, budget is {budget} "
            "(raise it with --budget)"
        )
        self.leaves = leaves
        self.budget = budget


class ConvergenceError(MlmcError):
    """The refinement loop hit its iteration cap.

    Attributes:
        stats: per-level statistics at the time the loop stopped
        rounds: number of refinement rounds executed
    """

    def __init__(self, message: str, stats: Optional[List] = None, rounds: int = 0):
        super().__init__(message)
        self.stats = stats or []
        self.rounds = rounds
