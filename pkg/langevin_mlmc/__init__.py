"""Multilevel Monte Carlo for Langevin equations with splitting integrators."""

from .errors import (
    BudgetExceededError,
    CalibrationError,
    ConfigError,
    ConvergenceError,
    InputError,
    MlmcError,
    StateError,
    UnsupportedError,
)
from .increments import DistributionKind, IncrementSource
from .integrators import Scheme
from .mlmc import MlmcConfig, MlmcResult, run
from .model import DoubleWell, GaussianBump, Harmonic, LangevinModel, ShiftedSquare

__version__ = "0.1.0"
