"""
Standardised increment streams and fine-to-coarse increment combiners.

Every source emits unit-variance samples xi; the step scaling (sqrt(h) for
Brownian increments, alpha_h for exact OU increments) is applied by the
integrators, never here. That keeps the coupling formulas exact.

Streams are reproducible: a source is keyed by (seed, stream_id) and backed by
numpy's Philox counter-based generator, seeded through a SeedSequence whose
spawn key is the stream id. Distinct stream ids give independent streams.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np

from .errors import InputError

SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)

# P(zeta = +-sqrt(3 + sqrt 6)) for the four-point law
FOUR_POINT_C = 0.5 * (1.0 - (3.0 + SQRT6) / 6.0)

LEVEL_BITS = 16
BLOCK_BITS = 48


class DistributionKind(str, Enum):
    GAUSSIAN = "gaussian"
    THREE_POINT = "three_point"
    FOUR_POINT = "four_point"

    @property
    def is_discrete(self) -> bool:
        return self is not DistributionKind.GAUSSIAN


def atoms(kind: DistributionKind) -> Tuple[np.ndarray, np.ndarray]:
    """Support points and probabilities of a discrete law, sorted by value.

    Raises:
        InputError: kind is Gaussian (continuous)
    """
    kind = DistributionKind(kind)
    if kind is DistributionKind.THREE_POINT:
        values = np.array([-SQRT3, 0.0, SQRT3])
        probs = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])
    elif kind is DistributionKind.FOUR_POINT:
        outer = math.sqrt(3.0 + SQRT6)
        inner = math.sqrt(3.0 - SQRT6)
        values = np.array([-outer, -inner, inner, outer])
        probs = np.array([FOUR_POINT_C, 0.5 - FOUR_POINT_C, 0.5 - FOUR_POINT_C, FOUR_POINT_C])
    else:
        raise InputError("the Gaussian law has no atoms")
    return values, probs


def moments(kind: DistributionKind, order: int) -> float:
    """Exact moment E[zeta^order] of the standardised law."""
    kind = DistributionKind(kind)
    if order < 0:
        raise InputError(f"order must be nonnegative, got {order}")
    if order == 0:
        return 1.0
    if order % 2 == 1:
        return 0.0
    half = order // 2
    if kind is DistributionKind.GAUSSIAN:
        # (order - 1)!!
        return float(math.prod(range(order - 1, 0, -2)))
    if kind is DistributionKind.THREE_POINT:
        # 2 * (1/6) * 3^half, kept in integers
        return float(3**half) / 3.0
    outer_sq = 3.0 + SQRT6
    inner_sq = 3.0 - SQRT6
    return 2.0 * FOUR_POINT_C * outer_sq**half + (1.0 - 2.0 * FOUR_POINT_C) * inner_sq**half


def quantile(values: np.ndarray, probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of a discrete law (values sorted ascending) at uniforms u in [0, 1)."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    index = np.searchsorted(cdf, u, side="right")
    return values[np.minimum(index, len(values) - 1)]


def combined_atoms(kind: DistributionKind, r: float) -> Tuple[np.ndarray, np.ndarray]:
    """Law of (r zeta1 + zeta2) / sqrt(1 + r^2) for i.i.d. discrete zeta1, zeta2.

    r = 1 is the Brownian sum rule. Returned sorted by value.
    """
    values, probs = atoms(kind)
    pair_values = (r * values[:, None] + values[None, :]) / math.sqrt(1.0 + r * r)
    pair_probs = probs[:, None] * probs[None, :]
    order = np.argsort(pair_values, axis=None, kind="stable")
    return pair_values.reshape(-1)[order], pair_probs.reshape(-1)[order]


def stream_id(level: int, block: int) -> int:
    """64-bit stream id for sample block `block` on level `level`."""
    if not 0 <= level < 2**LEVEL_BITS:
        raise InputError(f"level out of range: {level}")
    if not 0 <= block < 2**BLOCK_BITS:
        raise InputError(f"block out of range: {block}")
    return (level << BLOCK_BITS) | block


class IncrementSource:
    """Stream of i.i.d. standardised increments.

    One source belongs to one worker at a time; it has no locking. Two sources
    built from the same (kind, seed, stream_id) emit identical sequences.

    Attributes:
        kind: Gaussian, three-point or four-point law
        seed: 64-bit base seed
        stream_id: 64-bit stream identifier
    """

    def __init__(self, kind: DistributionKind, seed: int, stream_id: int = 0):
        self.kind = DistributionKind(kind)
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._rng = np.random.Generator(np.random.Philox(sequence))
        if self.kind.is_discrete:
            self._values, self._probs = atoms(self.kind)

    def __repr__(self):
        return f"IncrementSource(kind={self.kind.value}, seed={self.seed}, stream_id={self.stream_id})"

    def draw(self, n: int) -> np.ndarray:
        """Next n samples as a flat vector."""
        if n < 0:
            raise InputError(f"n must be nonnegative, got {n}")
        return self.draw_array((n,))

    def draw_array(self, shape) -> np.ndarray:
        """Next prod(shape) samples, in C order, reshaped to shape."""
        if self.kind is DistributionKind.GAUSSIAN:
            return self._rng.standard_normal(shape)
        return quantile(self._values, self._probs, self._rng.random(shape))

    def uniforms(self, shape) -> np.ndarray:
        """Raw uniforms on [0, 1) from the same stream (for quantile couplings)."""
        return self._rng.random(shape)


def ou_alpha(lam: float, h: float) -> float:
    """alpha_h = sqrt((1 - exp(-2 lam h)) / (2 lam)), std of the exact OU increment."""
    return math.sqrt(-math.expm1(-2.0 * lam * h) / (2.0 * lam))


@dataclass(frozen=True)
class OuCoupling:
    """Coefficients that merge two exact OU increments of step h into one of step 2h."""

    lam: float
    h: float

    def __post_init__(self):
        if not self.lam > 0.0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if not self.h > 0.0:
            raise InputError(f"h must be positive, got {self.h}")

    @property
    def r(self) -> float:
        return math.exp(-self.lam * self.h)

    @property
    def alpha_h(self) -> float:
        return ou_alpha(self.lam, self.h)

    @property
    def alpha_2h(self) -> float:
        return ou_alpha(self.lam, 2.0 * self.h)


def _check_pair(xi1, xi2) -> Tuple[np.ndarray, np.ndarray]:
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    if xi1.shape != xi2.shape:
        raise InputError(f"increment shapes differ: {xi1.shape} vs {xi2.shape}")
    return xi1, xi2


def combine_brownian(xi1, xi2, h: float) -> np.ndarray:
    """Standardised step-2h increment from two step-h ones: (xi1 + xi2) / sqrt(2)."""
    if not h > 0.0:
        raise InputError(f"h must be positive, got {h}")
    xi1, xi2 = _check_pair(xi1, xi2)
    return (xi1 + xi2) / math.sqrt(2.0)


def combine_ou(xi1, xi2, cpl: OuCoupling) -> np.ndarray:
    """Standardised step-2h OU increment: (r xi1 + xi2) / sqrt(1 + r^2)."""
    xi1, xi2 = _check_pair(xi1, xi2)
    r = cpl.r
    return (r * xi1 + xi2) / math.sqrt(1.0 + r * r)


def draw_block(kind: DistributionKind, seed: int, level: int, block: int, shape) -> np.ndarray:
    """Increments of sample block `block` on level `level`, drawn in C order."""
    return IncrementSource(kind, seed, stream_id(level, block)).draw_array(shape)
