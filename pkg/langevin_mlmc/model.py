"""
Langevin system definition and closed-form oracle for the harmonic case.

The Langevin equation in phase space (Q, P), dimension d:

    dQ = P dt
    dP = -lambda P dt - grad V(Q) dt + sigma dW(t)

Classes:
    Potential, Harmonic, DoubleWell: the potential V and its gradient
    QoI, GaussianBump, ShiftedSquare, Custom: quantities of interest phi(Q, P)
    LangevinModel: parameters, potential, initial state and end time
    GaussianLaw: mean and covariance of (Q, P) for the d = 1 harmonic oracle

Main Functions:
    grad_potential: gradient of V at q
    harmonic_exact_law: law of X(t) for the damped harmonic oscillator
    exact_qoi_expectation: E[phi] under a Gaussian law

All types are immutable after construction and can be shared between workers.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from .errors import InputError, UnsupportedError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# Tolerances for GaussianLaw validation
SYMMETRY_TOL = 1e-12
EIGEN_TOL = 1e-12

# Absolute tolerance requested from the covariance quadrature
COVARIANCE_QUAD_TOL = 1e-14


# =============================================================================
# Potentials
# =============================================================================


class Potential(ABC):
    """Potential V(Q), applied componentwise to vector positions."""

    @abstractmethod
    def energy(self, q: np.ndarray) -> np.ndarray:
        """V(q) summed over the last axis."""

    @abstractmethod
    def gradient(self, q: np.ndarray) -> np.ndarray:
        """grad V(q), same shape as q."""


@dataclass(frozen=True)
class Harmonic(Potential):
    """V(Q) = 1/2 omega0^2 Q^2. omega0 = 0 gives the free particle."""

    omega0: float

    def __post_init__(self):
        if not self.omega0 >= 0.0:
            raise InputError(f"omega0 must be nonnegative, got {self.omega0}")

    def energy(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * self.omega0**2 * np.sum(q * q, axis=-1)

    def gradient(self, q):
        return self.omega0**2 * np.asarray(q, dtype=float)


@dataclass(frozen=True)
class DoubleWell(Potential):
    """V(Q) = omega0^2 / (8 Qmin^2) (Q^2 - Qmin^2)^2 with wells at +-Qmin."""

    omega0: float
    qmin: float

    def __post_init__(self):
        if not self.omega0 > 0.0:
            raise InputError(f"omega0 must be positive, got {self.omega0}")
        if not self.qmin > 0.0:
            raise InputError(f"qmin must be positive, got {self.qmin}")

    def energy(self, q):
        q = np.asarray(q, dtype=float)
        coeff = self.omega0**2 / (8.0 * self.qmin**2)
        return coeff * np.sum((q * q - self.qmin**2) ** 2, axis=-1)

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        coeff = self.omega0**2 / (2.0 * self.qmin**2)
        return coeff * (q * q - self.qmin**2) * q


# =============================================================================
# Quantities of interest
# =============================================================================


class QoI(ABC):
    """phi(Q, P) evaluated on arrays of shape (..., d); returns shape (...)."""

    @abstractmethod
    def __call__(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        pass


@dataclass(frozen=True)
class GaussianBump(QoI):
    """phi(Q, P) = exp(-2 (P - 0.5)^2) sqrt(2/pi), a product over components for d > 1."""

    def __call__(self, q, p):
        p = np.asarray(p, dtype=float)
        return np.prod(SQRT_2_OVER_PI * np.exp(-2.0 * (p - 0.5) ** 2), axis=-1)


@dataclass(frozen=True)
class ShiftedSquare(QoI):
    """phi(Q, P) = (Q + Qmin)^2 + P^2, summed over components."""

    qmin: float

    def __call__(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.sum((q + self.qmin) ** 2 + p * p, axis=-1)


@dataclass(frozen=True)
class Custom(QoI):
    """User-supplied phi. The callable receives (q, p) arrays of shape (..., d)."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, q, p):
        return np.asarray(self.fn(q, p), dtype=float)


# =============================================================================
# Model and Gaussian law
# =============================================================================


def _as_vector(values) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class LangevinModel:
    """Langevin system with friction lam, noise strength sigma and end time T.

    sigma = 0 is accepted so that deterministic convergence checks can run
    through the same code; the oracle still needs a proper Gaussian law.
    """

    potential: Potential
    lam: float
    sigma: float
    q0: Tuple[float, ...]
    p0: Tuple[float, ...]
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q0", _as_vector(self.q0))
        object.__setattr__(self, "p0", _as_vector(self.p0))
        if not self.lam > 0.0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if not self.sigma >= 0.0:
            raise InputError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.T > 0.0:
            raise InputError(f"T must be positive, got {self.T}")
        if len(self.q0) != len(self.p0):
            raise InputError(
                f"q0 and p0 must have the same length ({len(self.q0)} != {len(self.p0)})"
            )

    @property
    def dim(self) -> int:
        return len(self.q0)

    def initial_state(self, batch: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """Initial (q, p) broadcast to shape (batch, d)."""
        q = np.tile(np.asarray(self.q0), (batch, 1))
        p = np.tile(np.asarray(self.p0), (batch, 1))
        return q, p


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """Law of (Q, P) for d = 1: mean vector of length 2 and 2x2 covariance."""

    mean: np.ndarray
    cov: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (2,):
            raise InputError(f"mean must have length 2, got shape {mean.shape}")
        if cov.shape != (2, 2):
            raise InputError(f"cov must be 2x2, got shape {cov.shape}")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL:
            raise InputError("cov is not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -EIGEN_TOL:
            raise InputError("cov is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


# =============================================================================
# Operations
# =============================================================================


def grad_potential(pot: Potential, q, dim: Optional[int] = None) -> np.ndarray:
    """Evaluate grad V(q).

    Args:
        pot: the potential
        q: positions, shape (..., d)
        dim: expected phase-space dimension d; checked against q when given

    Raises:
        InputError: q does not have d components
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if dim is not None and q.shape[-1] != dim:
        raise InputError(f"position has {q.shape[-1]} components, model has d={dim}")
    return pot.gradient(q)


def potential_energy(pot: Potential, q) -> np.ndarray:
    return pot.energy(np.atleast_1d(np.asarray(q, dtype=float)))


def hamiltonian(model: LangevinModel, q, p) -> np.ndarray:
    """H(q, p) = |p|^2 / 2 + V(q)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return 0.5 * np.sum(p * p, axis=-1) + potential_energy(model.potential, q)


def stationary_momentum_variance(model: LangevinModel) -> float:
    """Variance sigma^2 / (2 lambda) of P under the stationary law."""
    return model.sigma**2 / (2.0 * model.lam)


def _drift_matrix(model: LangevinModel) -> np.ndarray:
    omega0 = model.potential.omega0
    return np.array([[0.0, -1.0], [omega0**2, model.lam]])


def harmonic_exact_law(model: LangevinModel, t: float) -> GaussianLaw:
    """Law of X(t) = (Q(t), P(t)) for the damped harmonic oscillator, d = 1.

    mean = exp(-Lambda t) X0 and cov = int_0^t exp(-Lambda u) S S^T exp(-Lambda^T u) du
    with Lambda = [[0, -1], [omega0^2, lambda]] and S = (0, sigma)^T. The
    covariance is integrated with adaptive vector quadrature.

    Raises:
        UnsupportedError: potential is not Harmonic or d > 1
        InputError: t < 0
    """
    if not isinstance(model.potential, Harmonic):
        raise UnsupportedError(
            f"exact law is only available for the harmonic potential, got {type(model.potential).__name__}"
        )
    if model.dim != 1:
        raise UnsupportedError(f"exact law is only available for d=1, got d={model.dim}")
    if t < 0.0:
        raise InputError(f"t must be nonnegative, got {t}")

    drift = _drift_matrix(model)
    x0 = np.array([model.q0[0], model.p0[0]])
    mean = expm(-drift * t) @ x0
    if t == 0.0:
        return GaussianLaw(mean, np.zeros((2, 2)))

    noise = np.array([[0.0], [model.sigma]])
    noise_outer = noise @ noise.T

    def integrand(u):
        propagator = expm(-drift * u)
        return propagator @ noise_outer @ propagator.T

    cov, _ = integrate.quad_vec(
        integrand, 0.0, t, epsabs=COVARIANCE_QUAD_TOL, epsrel=COVARIANCE_QUAD_TOL
    )
    cov = 0.5 * (cov + cov.T)
    return GaussianLaw(mean, cov)


def exact_qoi_expectation(law: GaussianLaw, qoi: QoI) -> float:
    """E[phi(Q, P)] for (Q, P) distributed by law, in closed form.

    GaussianBump with P ~ N(mu, s^2):
        sqrt(2/pi) (1 + 4 s^2)^(-1/2) exp(-2 (mu - 0.5)^2 / (1 + 4 s^2))
    ShiftedSquare:
        (mu_Q + Qmin)^2 + var_Q + mu_P^2 + var_P

    Raises:
        UnsupportedError: qoi is Custom (or any other type)
    """
    if isinstance(qoi, GaussianBump):
        mu = law.mean[1]
        spread = 1.0 + 4.0 * law.cov[1, 1]
        return float(SQRT_2_OVER_PI / math.sqrt(spread) * math.exp(-2.0 * (mu - 0.5) ** 2 / spread))
    if isinstance(qoi, ShiftedSquare):
        mu_q, mu_p = law.mean
        return float((mu_q + qoi.qmin) ** 2 + law.cov[0, 0] + mu_p**2 + law.cov[1, 1])
    raise UnsupportedError(f"no closed-form expectation for {type(qoi).__name__}")
