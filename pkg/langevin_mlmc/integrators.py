"""
Time-stepping schemes for the Langevin equation and coupled fine/coarse paths.

Schemes:
    EULER_MARUYAMA       P+ = P - (lam P + grad V(Q)) h + sigma sqrt(h) xi,  Q+ = Q + P h
    SYMPLECTIC_EULER_OU  exact OU step, kick with grad V(Q_n), drift with P_{n+1}
    STORMER_VERLET_OU    OU half step, kick-drift-kick, OU half step

A scheme is a sequence of substeps, each consuming exactly one increment
vector: one for Euler-Maruyama and symplectic Euler, two (xi_n, xi_{n+1/2})
for Stormer-Verlet, drawn in that order. Tree enumeration of the coarse level
reuses the partial state after each substep.

Increments for a batch of B paths with M steps are stored as an array of shape
(B, M, r, d): each path's draws are contiguous and in program order.

Usage:
    pairs = sample_pairs(Scheme.SYMPLECTIC_EULER_OU, model, 64, increments, qoi)
    sample = coupled_pair(Scheme.SYMPLECTIC_EULER_OU, model, 64, source, qoi)
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .errors import InputError
from .increments import IncrementSource, OuCoupling, combine_brownian, combine_ou, ou_alpha
from .model import LangevinModel, QoI, hamiltonian

# Relative tolerance for M h = T
STEP_TOL = 1e-14


class Scheme(str, Enum):
    EULER_MARUYAMA = "euler_maruyama"
    SYMPLECTIC_EULER_OU = "symplectic_euler_ou"
    STORMER_VERLET_OU = "stormer_verlet_ou"

    @property
    def draws_per_step(self) -> int:
        return 2 if self is Scheme.STORMER_VERLET_OU else 1

    @property
    def weak_order(self) -> int:
        return 2 if self is Scheme.STORMER_VERLET_OU else 1

    @property
    def uses_ou(self) -> bool:
        return self is not Scheme.EULER_MARUYAMA


class State(NamedTuple):
    q: np.ndarray
    p: np.ndarray


# A substep maps (q, p, xi) to the next (q, p); all arrays have shape (..., d).
Substep = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class PathConfig:
    """Uniform grid of M steps over [0, T]."""

    scheme: Scheme
    steps: int
    model: LangevinModel

    def __post_init__(self):
        if self.steps < 1:
            raise InputError(f"steps must be positive, got {self.steps}")
        if abs(self.steps * self.h - self.model.T) > STEP_TOL * self.model.T * self.steps:
            raise InputError("M h does not reproduce T")

    @property
    def h(self) -> float:
        return self.model.T / self.steps


@dataclass(frozen=True)
class CoupledSample:
    fine_value: float
    coarse_value: float

    @property
    def y(self) -> float:
        return self.fine_value - self.coarse_value


def substeps(scheme: Scheme, model: LangevinModel, h: float) -> List[Substep]:
    """Substep maps of one step of size h, with all step constants precomputed."""
    if not h > 0.0:
        raise InputError(f"h must be positive, got {h}")
    lam, sigma = model.lam, model.sigma
    grad = model.potential.gradient

    if scheme is Scheme.EULER_MARUYAMA:
        noise = sigma * math.sqrt(h)

        def euler(q, p, xi):
            return q + p * h, p - (lam * p + grad(q)) * h + noise * xi

        return [euler]

    if scheme is Scheme.SYMPLECTIC_EULER_OU:
        decay = math.exp(-lam * h)
        noise = sigma * ou_alpha(lam, h)

        def symplectic_euler(q, p, xi):
            p_star = decay * p + noise * xi
            p_next = p_star - h * grad(q)
            return q + p_next * h, p_next

        return [symplectic_euler]

    if scheme is Scheme.STORMER_VERLET_OU:
        decay = math.exp(-0.5 * lam * h)
        noise = sigma * ou_alpha(lam, 0.5 * h)

        def leading(q, p, xi):
            p_star = decay * p + noise * xi
            p_half = p_star - 0.5 * h * grad(q)
            q_next = q + h * p_half
            return q_next, p_half - 0.5 * h * grad(q_next)

        def trailing(q, p, xi):
            return q, decay * p + noise * xi

        return [leading, trailing]

    raise InputError(f"unknown scheme {scheme!r}")


def step(
    scheme: Scheme,
    model: LangevinModel,
    state: State,
    h: float,
    xi: Union[np.ndarray, Sequence[np.ndarray]],
) -> State:
    """Advance one step of size h.

    Args:
        xi: one increment vector (scalar or shape (d,)), or draws_per_step
            vectors stacked as shape (draws, d); lists are read the same way

    Raises:
        InputError: h <= 0, wrong number of increment vectors or xi of rank > 2
    """
    scheme = Scheme(scheme)
    maps = substeps(scheme, model, h)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim > 2:
        raise InputError(f"increments must have rank 0, 1 or 2, got shape {xi.shape}")
    draws = [np.atleast_1d(xi)] if xi.ndim <= 1 else list(xi)
    if len(draws) != scheme.draws_per_step:
        raise InputError(
            f"{scheme.value} needs {scheme.draws_per_step} increment vector(s), got {len(draws)}"
        )
    q = np.atleast_1d(np.asarray(state.q, dtype=float))
    p = np.atleast_1d(np.asarray(state.p, dtype=float))
    for substep, draw in zip(maps, draws):
        q, p = substep(q, p, draw)
    return State(q, p)


def ou_exact_step(p, h: float, lam: float, sigma: float, xi) -> np.ndarray:
    """Exact OU update e^{-lam h} p + sigma alpha_h xi."""
    if not h > 0.0:
        raise InputError(f"h must be positive, got {h}")
    if not lam > 0.0:
        raise InputError(f"lambda must be positive, got {lam}")
    return math.exp(-lam * h) * np.asarray(p, dtype=float) + sigma * ou_alpha(lam, h) * np.asarray(
        xi, dtype=float
    )


def increment_shape(scheme: Scheme, model: LangevinModel, batch: int, steps: int) -> Tuple[int, int, int, int]:
    return (batch, steps, Scheme(scheme).draws_per_step, model.dim)


def evolve(scheme: Scheme, model: LangevinModel, steps: int, increments: np.ndarray) -> State:
    """Evolve a batch of paths from (q0, p0) over `steps` uniform steps to T.

    Args:
        increments: standardised draws of shape (B, steps, r, d)
    """
    scheme = Scheme(scheme)
    expected = increment_shape(scheme, model, increments.shape[0], steps)
    if increments.shape != expected:
        raise InputError(f"increments have shape {increments.shape}, expected {expected}")
    maps = substeps(scheme, model, model.T / steps)
    q, p = model.initial_state(increments.shape[0])
    for n in range(steps):
        for j, substep in enumerate(maps):
            q, p = substep(q, p, increments[:, n, j, :])
    return State(q, p)


def coarse_increments(scheme: Scheme, model: LangevinModel, fine_h: float, increments: np.ndarray) -> np.ndarray:
    """Coarse-path increments built from consecutive pairs of fine steps.

    Euler-Maruyama sums the Brownian increments. The OU schemes merge each
    increment family separately with the exact OU rule: symplectic Euler merges
    two OU steps of size h, Stormer-Verlet merges two OU half steps of size h/2
    for the leading and for the trailing half kick.
    """
    first = increments[:, 0::2]
    second = increments[:, 1::2]
    if scheme is Scheme.EULER_MARUYAMA:
        return combine_brownian(first, second, fine_h)
    ou_step = fine_h if scheme is Scheme.SYMPLECTIC_EULER_OU else 0.5 * fine_h
    return combine_ou(first, second, OuCoupling(model.lam, ou_step))


def sample_paths(scheme: Scheme, model: LangevinModel, steps: int, increments: np.ndarray, qoi: QoI) -> np.ndarray:
    """phi(X_M) for a batch of independent paths with step T/steps."""
    if steps < 1:
        raise InputError(f"steps must be positive, got {steps}")
    q, p = evolve(scheme, model, steps, increments)
    return qoi(q, p)


def sample_pairs(
    scheme: Scheme, model: LangevinModel, steps: int, increments: np.ndarray, qoi: QoI
) -> Tuple[np.ndarray, np.ndarray]:
    """(fine, coarse) values of phi at T for a batch of coupled paths.

    The fine path takes `steps` steps of h = T/steps with the given increments,
    the coarse path steps/2 steps of 2h driven by the combined increments.
    Both start at (q0, p0).
    """
    scheme = Scheme(scheme)
    if steps < 2 or steps % 2:
        raise InputError(f"coupled paths need an even number of fine steps, got {steps}")
    fine_h = model.T / steps
    fine = sample_paths(scheme, model, steps, increments, qoi)
    coarse_draws = coarse_increments(scheme, model, fine_h, increments)
    coarse = sample_paths(scheme, model, steps // 2, coarse_draws, qoi)
    return fine, coarse


def coupled_pair(scheme: Scheme, model: LangevinModel, steps: int, fine_src: IncrementSource, qoi: QoI) -> CoupledSample:
    """One coupled fine/coarse sample drawing fresh fine increments from fine_src."""
    if steps < 2 or steps % 2:
        raise InputError(f"coupled paths need an even number of fine steps, got {steps}")
    draws = fine_src.draw_array(increment_shape(scheme, model, 1, steps))
    fine, coarse = sample_pairs(scheme, model, steps, draws, qoi)
    return CoupledSample(float(fine[0]), float(coarse[0]))


def single_path(scheme: Scheme, model: LangevinModel, steps: int, src: IncrementSource, qoi: QoI) -> float:
    """phi(X_M) for one path with step T/steps."""
    if steps < 1:
        raise InputError(f"steps must be positive, got {steps}")
    draws = src.draw_array(increment_shape(scheme, model, 1, steps))
    return float(sample_paths(scheme, model, steps, draws, qoi)[0])


def hamiltonian_drift(scheme: Scheme, model: LangevinModel, steps: int) -> float:
    """Largest relative change of H(q, p) along the noise-free path from (q0, p0).

    Used as a stability check of the Hamiltonian part of a scheme.
    """
    scheme = Scheme(scheme)
    maps = substeps(scheme, model, model.T / steps)
    q, p = model.initial_state(1)
    start = float(hamiltonian(model, q, p)[0])
    if start == 0.0:
        raise InputError("initial energy is zero; relative drift is undefined")
    zero = np.zeros_like(q)
    drift = 0.0
    for _ in range(steps):
        for substep in maps:
            q, p = substep(q, p, zero)
        drift = max(drift, abs(float(hamiltonian(model, q, p)[0]) - start) / abs(start))
    return drift
