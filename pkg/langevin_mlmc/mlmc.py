"""
Adaptive multilevel Monte Carlo driver for Langevin functionals.

The estimator telescopes over levels l = 0..L with M_l = M0 2^l steps of
size h_l = T / M_l:

    E[P_L] = E[P_0] + sum_{l=1}^{L} E[P_l - P_{l-1}]

Level 0 is a plain Monte Carlo average (or, for discrete increments, the exact
enumeration of exact_coarse with zero variance); levels l >= 1 average coupled
fine/coarse corrections Y_l. Sample counts follow the adaptive rule

    N_l+ = ceil(2 eps^-2 sqrt(V_l h_l) sum_j sqrt(V_j / h_j))

iterated until every level holds at least its target.

Samples are produced in fixed-size blocks. Block b of level l draws from stream
(seed, stream_id(l, b)) and per-block partial sums are merged in block order, so
a run is reproducible for a fixed seed whatever the number of threads.

Main Functions:
    run: the adaptive driver
    optimal_n: sample targets from current statistics
    calibrate_levels: pilot estimate of the bias constant and the finest level
    extrapolate: Richardson-extrapolated estimate
    inter_level_bias: E[P_l - P~_l] for discrete increments
    monte_carlo: single-level baseline
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple

import numpy as np

from . import log
from .errors import CalibrationError, ConvergenceError, InputError, StateError, UnsupportedError
from .exact_coarse import DEFAULT_BUDGET, enumerate_tree
from .increments import DistributionKind, IncrementSource, atoms, combined_atoms, draw_block, quantile, stream_id
from .integrators import Scheme, increment_shape, sample_pairs, sample_paths
from .model import LangevinModel, QoI

DEFAULT_N_MIN = 100
DEFAULT_BLOCK_SIZE = 100
MAX_ROUNDS = 1000

# Upper bound on floats held by one vectorised batch of increments
BATCH_ELEMENTS = 2**22

# Stream namespaces kept apart from the level streams of a run
PILOT_LEVEL_OFFSET = 0x4000
BIAS_LEVEL_OFFSET = 0x8000
MC_LEVEL = 0xFFFF

# Pilot corrections within this many standard errors of zero are rejected
CALIBRATION_Z = 2.0


@dataclass
class MlmcConfig:
    """Run parameters.

    Attributes:
        eps_max: target root-mean-square accuracy
        M0: steps on the coarsest level
        L: finest level index
        N_min: initial samples per level
        scheme: time-stepping scheme
        dist: increment law
        extrapolate: return the Richardson-extrapolated estimate
        exact_coarse: evaluate level 0 by tree enumeration (discrete laws only)
        alpha: weak order of the scheme, used by extrapolation and calibration
    """

    eps_max: float
    M0: int = 4
    L: int = 3
    N_min: int = DEFAULT_N_MIN
    scheme: Scheme = Scheme.SYMPLECTIC_EULER_OU
    dist: DistributionKind = DistributionKind.GAUSSIAN
    extrapolate: bool = False
    exact_coarse: bool = False
    alpha: float = 1.0
    block_size: int = DEFAULT_BLOCK_SIZE
    threads: int = 1
    max_rounds: int = MAX_ROUNDS
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        self.dist = DistributionKind(self.dist)
        if not self.eps_max > 0.0:
            raise InputError(f"eps_max must be positive, got {self.eps_max}")
        if self.M0 < 1:
            raise InputError(f"M0 must be positive, got {self.M0}")
        if self.L < 0:
            raise InputError(f"L must be nonnegative, got {self.L}")
        if self.N_min < 2:
            raise InputError(f"N_min must be at least 2, got {self.N_min}")
        if self.block_size < 1:
            raise InputError(f"block_size must be positive, got {self.block_size}")
        if self.alpha < 0.5:
            raise InputError(f"weak order must be at least 1/2, got {self.alpha}")
        if self.exact_coarse and not self.dist.is_discrete:
            raise InputError("exact coarse evaluation needs a three- or four-point law")
        if self.extrapolate and self.L < 1:
            raise InputError("extrapolation needs at least two levels (L >= 1)")

    @property
    def variance_split(self) -> float:
        """Share factor of eps^2 for the sampling error: 1/2 Gaussian, 1/3 discrete."""
        return 3.0 if self.dist.is_discrete else 2.0

    def steps(self, level: int) -> int:
        return self.M0 * 2**level

    def step_size(self, level: int, T: float) -> float:
        return T / self.steps(level)


@dataclass
class LevelStats:
    """Running sums of the level-l corrections Y_l."""

    level: int
    h: float
    N: int = 0
    sum_y: float = 0.0
    sum_y2: float = 0.0
    cost: float = 0.0
    blocks: int = 0
    exact: bool = False
    exact_value: Optional[float] = None

    @property
    def Yhat(self) -> float:
        if self.exact:
            return self.exact_value
        if self.N < 1:
            raise StateError(f"level {self.level} has no samples")
        return self.sum_y / self.N

    @property
    def Vhat(self) -> float:
        if self.exact:
            return 0.0
        if self.N < 2:
            raise StateError(f"level {self.level} needs N >= 2 for a variance, has {self.N}")
        return max((self.sum_y2 - self.sum_y**2 / self.N) / (self.N - 1), 0.0)

    @property
    def has_variance(self) -> bool:
        return self.exact or self.N >= 2

    def merge(self, sum_y: float, sum_y2: float, count: int, cost: float) -> None:
        self.sum_y += sum_y
        self.sum_y2 += sum_y2
        self.N += count
        self.cost += cost


@dataclass
class MlmcResult:
    estimate: float
    per_level: List[LevelStats]
    bias_est: float
    stat_error_est: float
    total_cost: float
    wall_time: float
    cpu_time: float = 0.0
    plain_estimate: float = 0.0
    rounds: int = 0
    inter_level_bias: Optional[float] = None
    config: Optional[MlmcConfig] = None

    @property
    def L(self) -> int:
        return len(self.per_level) - 1


@dataclass(frozen=True)
class Calibration:
    """Fitted bias constant and the level/tolerance it implies."""

    c1: float
    alpha: float
    L: int
    eps: float
    yhat: Tuple[float, ...]
    stderr: Tuple[float, ...]


@dataclass(frozen=True)
class BiasEstimate:
    """Monte Carlo estimate of E[P_l - P~_l] with its standard error."""

    value: float
    stderr: float
    h: float
    samples: int
    trivial: bool = False


# =============================================================================
# Sample generation
# =============================================================================


def _level_kernel(config: MlmcConfig, model: LangevinModel, qoi: QoI, level: int):
    """(increment shape per sample, function increments -> Y values, cost per sample)."""
    steps = config.steps(level)
    shape = increment_shape(config.scheme, model, 1, steps)[1:]
    if level == 0:
        return shape, lambda draws: sample_paths(config.scheme, model, steps, draws, qoi), float(steps)

    def corrections(draws):
        fine, coarse = sample_pairs(config.scheme, model, steps, draws, qoi)
        return fine - coarse

    return shape, corrections, float(steps + steps // 2)


def _simulate_blocks(
    config: MlmcConfig,
    model: LangevinModel,
    qoi: QoI,
    level: int,
    blocks: Iterable[int],
    seed: int,
    stream_level: Optional[int] = None,
) -> List[Tuple[float, float, int, float]]:
    """Per-block (sum Y, sum Y^2, count, cost), in block order."""
    shape, kernel, unit_cost = _level_kernel(config, model, qoi, level)
    stream_level = level if stream_level is None else stream_level
    size = config.block_size
    per_sample = int(np.prod(shape))
    blocks = list(blocks)
    blocks_per_batch = max(1, BATCH_ELEMENTS // max(1, per_sample * size))
    if config.threads > 1:
        blocks_per_batch = min(blocks_per_batch, max(1, math.ceil(len(blocks) / config.threads)))
    batches = [blocks[i : i + blocks_per_batch] for i in range(0, len(blocks), blocks_per_batch)]

    def run_batch(batch):
        draws = np.concatenate(
            [
                draw_block(config.dist, seed, stream_level, b, (size,) + shape)
                for b in batch
            ]
        )
        values = kernel(draws)
        parts = []
        for k in range(len(batch)):
            chunk = values[k * size : (k + 1) * size]
            parts.append((float(np.sum(chunk)), float(np.sum(chunk * chunk)), size, unit_cost * size))
        return parts

    if config.threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run_batch, batches))
    else:
        results = [run_batch(batch) for batch in batches]
    return [part for parts in results for part in parts]


def _extend(config, model, qoi, stats: LevelStats, target: int, seed: int) -> None:
    missing = target - stats.N
    if missing <= 0:
        return
    count = math.ceil(missing / config.block_size)
    blocks = range(stats.blocks, stats.blocks + count)
    for part in _simulate_blocks(config, model, qoi, stats.level, blocks, seed):
        stats.merge(*part)
    stats.blocks += count


# =============================================================================
# Sample allocation
# =============================================================================


def sample_targets(
    stats: List[LevelStats], eps: float, split: float = 2.0, exact_coarse: bool = False
) -> List[float]:
    """Unrounded optimal sample counts split eps^-2 sqrt(V_l h_l) sum_j sqrt(V_j / h_j).

    Levels evaluated exactly get target 0 and are left out of the sum.

    Raises:
        StateError: some sampled level has N < 2
        InputError: eps <= 0
    """
    if not eps > 0.0:
        raise InputError(f"eps must be positive, got {eps}")
    skip = [s.exact or (exact_coarse and s.level == 0) for s in stats]
    for s, skipped in zip(stats, skip):
        if not skipped and not s.has_variance:
            raise StateError(f"level {s.level} has no valid variance estimate (N={s.N})")
    total = sum(math.sqrt(s.Vhat / s.h) for s, skipped in zip(stats, skip) if not skipped)
    return [
        0.0 if skipped else split * eps**-2 * math.sqrt(s.Vhat * s.h) * total
        for s, skipped in zip(stats, skip)
    ]


def optimal_n(
    stats: List[LevelStats], eps: float, split: float = 2.0, exact_coarse: bool = False
) -> List[int]:
    """Sample targets N_l+ (rounded up) for every level."""
    return [math.ceil(t) for t in sample_targets(stats, eps, split, exact_coarse)]


def bias_estimate(stats: List[LevelStats], alpha: float) -> float:
    """|Y_L| / (2^alpha - 1), the Richardson estimate of the finest-level bias."""
    if len(stats) < 2:
        return math.nan
    return abs(stats[-1].Yhat) / (2.0**alpha - 1.0)


def convergence_rates(stats: List[LevelStats]) -> Tuple[float, float]:
    """Fitted slopes of log2 |Y_l| and log2 V_l against log2 h_l over levels l >= 1."""
    sampled = [s for s in stats if s.level >= 1 and s.has_variance]
    h = [s.h for s in sampled if s.Yhat != 0.0]
    y = [abs(s.Yhat) for s in sampled if s.Yhat != 0.0]
    hv = [s.h for s in sampled if s.Vhat > 0.0]
    v = [s.Vhat for s in sampled if s.Vhat > 0.0]
    alpha = np.polyfit(np.log2(h), np.log2(y), 1)[0] if len(h) >= 2 else math.nan
    beta = np.polyfit(np.log2(hv), np.log2(v), 1)[0] if len(hv) >= 2 else math.nan
    return float(alpha), float(beta)


# =============================================================================
# Driver
# =============================================================================


def _stat_error(stats: List[LevelStats], extrapolation_weight: float) -> float:
    variance = sum(s.Vhat / s.N for s in stats if not s.exact and s.N > 0)
    finest = stats[-1]
    if extrapolation_weight and not finest.exact and finest.N > 0:
        variance += ((1.0 + extrapolation_weight) ** 2 - 1.0) * finest.Vhat / finest.N
    return math.sqrt(variance)


def _extrapolation_weight(alpha: float) -> float:
    if alpha == 1:
        return 1.0
    if alpha == 2:
        return 1.0 / 3.0
    raise UnsupportedError(f"extrapolation is implemented for weak order 1 or 2, got {alpha}")


def run(config: MlmcConfig, model: LangevinModel, qoi: QoI, seed: int = 0, bias_samples: int = 0) -> MlmcResult:
    """Adaptive MLMC estimate of E[phi(X(T))].

    Args:
        config: run parameters
        model: Langevin system
        qoi: quantity of interest
        seed: base seed of all increment streams
        bias_samples: when > 0 and the law is discrete, also estimate the
            inter-level bias at the finest level with this many samples

    Raises:
        ConvergenceError: the refinement loop exceeded config.max_rounds
    """
    wall_start = time.perf_counter()
    cpu_start = time.process_time()
    stats = [LevelStats(level, config.step_size(level, model.T)) for level in range(config.L + 1)]

    if config.exact_coarse:
        tree = enumerate_tree(model, config.scheme, qoi, config.M0, config.dist, config.budget, config.threads)
        stats[0].exact = True
        stats[0].exact_value = tree.value
        stats[0].cost = float(tree.nodes) / config.scheme.draws_per_step

    targets = [0 if s.exact else config.N_min for s in stats]
    rounds = 0
    while any(s.N < t for s, t in zip(stats, targets)):
        rounds += 1
        if rounds > config.max_rounds:
            raise ConvergenceError(
                f"no convergence after {config.max_rounds} refinement rounds", stats=stats, rounds=rounds - 1
            )
        for s in reversed(stats):
            _extend(config, model, qoi, s, targets[s.level], seed)
        targets = optimal_n(stats, config.eps_max, config.variance_split, config.exact_coarse)
        log.debug(f"round {rounds}: N={[s.N for s in stats]} targets={targets}")

    plain = math.fsum(s.Yhat for s in stats)
    weight = _extrapolation_weight(config.alpha) if config.extrapolate else 0.0
    result = MlmcResult(
        estimate=plain,
        per_level=stats,
        bias_est=bias_estimate(stats, config.alpha),
        stat_error_est=_stat_error(stats, weight),
        total_cost=sum(s.cost for s in stats),
        wall_time=0.0,
        plain_estimate=plain,
        rounds=rounds,
        config=config,
    )
    if config.extrapolate:
        result.estimate = extrapolate(result, config.alpha)
    if bias_samples > 0 and config.dist.is_discrete:
        result.inter_level_bias = inter_level_bias(config, model, qoi, config.L, bias_samples, seed).value
    result.wall_time = time.perf_counter() - wall_start
    result.cpu_time = time.process_time() - cpu_start
    log.info(
        f"MLMC L={config.L} M0={config.M0} eps={config.eps_max:g}: estimate {result.estimate:.10g} "
        f"+- {result.stat_error_est:.3g}, cost {result.total_cost:.4g}, {rounds} rounds"
    )
    return result


def extrapolate(result: MlmcResult, alpha: float) -> float:
    """Richardson-extrapolated estimate from the two finest levels.

    alpha = 1: estimate + Y_L, i.e. 2 P_L - P_{L-1}
    alpha = 2: estimate + Y_L / 3, i.e. (4 P_L - P_{L-1}) / 3

    Raises:
        InputError: fewer than two levels
        UnsupportedError: alpha not in {1, 2}
    """
    if result.L < 1:
        raise InputError("extrapolation needs at least two levels (L >= 1)")
    weight = _extrapolation_weight(alpha)
    return result.plain_estimate + weight * result.per_level[-1].Yhat


def monte_carlo(
    config: MlmcConfig,
    model: LangevinModel,
    qoi: QoI,
    steps: int,
    pilot_samples: int = 1000,
    seed: int = 0,
) -> MlmcResult:
    """Plain single-level Monte Carlo with step T/steps.

    A pilot of pilot_samples paths estimates V; the sample count is then
    N = ceil(split eps^-2 V) and the pilot blocks are reused as the first
    blocks of the run. The result has a single LevelStats entry.
    """
    if steps < 1:
        raise InputError(f"steps must be positive, got {steps}")
    if pilot_samples < 2:
        raise InputError(f"pilot_samples must be at least 2, got {pilot_samples}")
    wall_start = time.perf_counter()
    cpu_start = time.process_time()
    single = replace(config, M0=steps, L=0, extrapolate=False, exact_coarse=False)
    stats = LevelStats(0, model.T / steps)

    def extend(target):
        missing = target - stats.N
        if missing <= 0:
            return
        count = math.ceil(missing / single.block_size)
        blocks = range(stats.blocks, stats.blocks + count)
        for part in _simulate_blocks(single, model, qoi, 0, blocks, seed, MC_LEVEL):
            stats.merge(*part)
        stats.blocks += count

    extend(max(pilot_samples, config.N_min))
    target = math.ceil(config.variance_split * stats.Vhat / config.eps_max**2)
    log.debug(f"MC pilot: V={stats.Vhat:.4g}, N target {target}")
    extend(target)

    estimate = stats.Yhat
    result = MlmcResult(
        estimate=estimate,
        per_level=[stats],
        bias_est=math.nan,
        stat_error_est=math.sqrt(stats.Vhat / stats.N),
        total_cost=stats.cost,
        wall_time=time.perf_counter() - wall_start,
        cpu_time=time.process_time() - cpu_start,
        plain_estimate=estimate,
        rounds=1,
        config=single,
    )
    log.info(f"MC M={steps} eps={config.eps_max:g}: estimate {estimate:.10g}, N={stats.N}")
    return result


# =============================================================================
# Calibration
# =============================================================================


def bias_constant(yhat: float, h: float, alpha: float) -> float:
    """c~1 from Y_l ~ c~1 (1 - 2^alpha) h_l^alpha."""
    return yhat / ((1.0 - 2.0**alpha) * h**alpha)


def levels_for_tolerance(c1: float, alpha: float, T: float, M0: int, eps: float, split: float = 2.0) -> int:
    """Smallest L >= 0 with c1 (T / (M0 2^L))^alpha <= eps / sqrt(split)."""
    if not (c1 > 0.0 and eps > 0.0):
        raise InputError("c1 and eps must be positive")
    h_needed = (eps / (math.sqrt(split) * c1)) ** (1.0 / alpha)
    return max(0, math.ceil(math.log2(T / (M0 * h_needed)) - 1e-12))


def tolerance_for_levels(c1: float, alpha: float, T: float, M0: int, L: int, split: float = 2.0) -> float:
    """eps such that c1 h_L^alpha = eps / sqrt(split)."""
    return math.sqrt(split) * c1 * (T / (M0 * 2**L)) ** alpha


def m0_for_tolerance(c1: float, alpha: float, T: float, L: int, eps: float, split: float = 2.0) -> int:
    """Smallest M0 >= 1 with c1 (T / (M0 2^L))^alpha <= eps / sqrt(split), L held fixed."""
    if not (c1 > 0.0 and eps > 0.0):
        raise InputError("c1 and eps must be positive")
    h_needed = (eps / (math.sqrt(split) * c1)) ** (1.0 / alpha)
    return max(1, math.ceil(T / (2**L * h_needed) - 1e-12))


def _pilot(config: MlmcConfig, model: LangevinModel, qoi: QoI, level: int, samples: int, seed: int) -> LevelStats:
    stats = LevelStats(level, config.step_size(level, model.T))
    blocks = range(math.ceil(samples / config.block_size))
    for part in _simulate_blocks(config, model, qoi, level, blocks, seed, PILOT_LEVEL_OFFSET + level):
        stats.merge(*part)
    return stats


def extrapolated_order(alpha: float) -> float:
    """Weak order of the Richardson-extrapolated estimate: 2 after order 1, 4 after order 2."""
    _extrapolation_weight(alpha)
    return 2.0 * alpha


def _significant_constants(values, stderr, h, alpha: float) -> List[float]:
    return [bias_constant(v, step, alpha) for v, se, step in zip(values, stderr, h) if abs(v) > CALIBRATION_Z * se]


def calibrate_levels(
    config: MlmcConfig,
    model: LangevinModel,
    qoi: QoI,
    pilot_samples: int = 1000,
    eps: Optional[float] = None,
    L: Optional[int] = None,
    level: int = 1,
    seed: int = 0,
) -> Calibration:
    """Estimate the bias constant c1 from pilot corrections on adjacent levels.

    Each level gives c~1 = Y_l / ((1 - 2^alpha) h_l^alpha); levels whose Y_l is
    within CALIBRATION_Z standard errors of zero are ignored and the remaining
    estimates are averaged, c1 = |c~1|. Then either L is solved from eps
    (rounding up) or eps from L. config.L is ignored.

    With config.extrapolate a third pilot level is run and the constant is
    fitted to differences of consecutive extrapolated values,
    E_l - E_{l-1} = (1 + w) Y_l - w Y_{l-1}, at the raised order
    extrapolated_order(alpha). If those differences are all within noise the
    base-order constant is used instead, with a warning.

    Raises:
        InputError: pilot_samples < 100 or neither/both of eps and L given
        CalibrationError: all pilot corrections are indistinguishable from 0
    """
    if pilot_samples < 100:
        raise InputError(f"pilot_samples must be at least 100, got {pilot_samples}")
    if (eps is None) == (L is None):
        raise InputError("give exactly one of eps and L")
    if level < 1:
        raise InputError(f"pilot level must be at least 1, got {level}")

    depth = 3 if config.extrapolate else 2
    pilot_config = replace(config, L=level + depth - 1, extrapolate=False, exact_coarse=False)
    pilots = [_pilot(pilot_config, model, qoi, lvl, pilot_samples, seed) for lvl in range(level, level + depth)]
    yhat = tuple(s.Yhat for s in pilots)
    stderr = tuple(math.sqrt(s.Vhat / s.N) for s in pilots)

    alpha = config.alpha
    estimates = []
    if config.extrapolate:
        w = _extrapolation_weight(config.alpha)
        diffs = [(1.0 + w) * yhat[i] - w * yhat[i - 1] for i in range(1, depth)]
        diff_se = [math.hypot((1.0 + w) * stderr[i], w * stderr[i - 1]) for i in range(1, depth)]
        raised = extrapolated_order(config.alpha)
        estimates = _significant_constants(diffs, diff_se, [s.h for s in pilots[1:]], raised)
        if estimates:
            alpha = raised
        else:
            log.warning(
                f"extrapolated pilot differences {tuple(diffs)} are within noise; "
                f"sizing levels at weak order {config.alpha}"
            )
    if not estimates:
        estimates = _significant_constants(yhat[:2], stderr[:2], [s.h for s in pilots[:2]], config.alpha)
    if not estimates:
        raise CalibrationError(
            f"pilot corrections {yhat} are within {CALIBRATION_Z} standard errors of zero; "
            "increase pilot_samples"
        )
    c1 = abs(float(np.mean(estimates)))
    split = config.variance_split
    minimum = 1 if config.extrapolate else 0
    if eps is not None:
        L = max(minimum, levels_for_tolerance(c1, alpha, model.T, config.M0, eps, split))
    else:
        eps = tolerance_for_levels(c1, alpha, model.T, config.M0, L, split)
    log.info(f"calibration: c1={c1:.4g} (alpha={alpha}), L={L}, eps={eps:.4g}")
    return Calibration(c1=c1, alpha=alpha, L=L, eps=eps, yhat=yhat, stderr=stderr)


# =============================================================================
# Inter-level bias for discrete increments
# =============================================================================


def _coupling_ratio(scheme: Scheme, model: LangevinModel, h: float) -> float:
    """r of the fine-to-coarse rule producing level-h increments (1 for Brownian sums)."""
    if scheme is Scheme.EULER_MARUYAMA:
        return 1.0
    if scheme is Scheme.SYMPLECTIC_EULER_OU:
        return math.exp(-model.lam * 0.5 * h)
    return math.exp(-model.lam * 0.25 * h)


def inter_level_bias(
    config: MlmcConfig, model: LangevinModel, qoi: QoI, level: int, samples: int, seed: int = 0
) -> BiasEstimate:
    """Estimate E[P_l - P~_l] for a three- or four-point law.

    P_l uses step-h_l increments drawn directly from the discrete law; P~_l uses
    increments combined from two finer discrete draws by the coupling rule.
    Both paths are driven by common uniforms through their inverse CDFs, which
    keeps the marginal laws exact while correlating the two paths.

    For Gaussian increments the two constructions coincide sample by sample and
    the result is 0 (flagged trivial).
    """
    h = config.step_size(level, model.T)
    if not config.dist.is_discrete:
        return BiasEstimate(value=0.0, stderr=0.0, h=h, samples=0, trivial=True)
    if samples < 2:
        raise InputError(f"samples must be at least 2, got {samples}")

    steps = config.steps(level)
    values, probs = atoms(config.dist)
    pair_values, pair_probs = combined_atoms(config.dist, _coupling_ratio(config.scheme, model, h))
    shape = increment_shape(config.scheme, model, 1, steps)[1:]
    size = config.block_size
    sum_d = 0.0
    sum_d2 = 0.0
    count = 0
    for block in range(math.ceil(samples / size)):
        source = IncrementSource(config.dist, seed, stream_id(BIAS_LEVEL_OFFSET + level, block))
        u = source.uniforms((size,) + shape)
        direct = sample_paths(config.scheme, model, steps, quantile(values, probs, u), qoi)
        combined = sample_paths(config.scheme, model, steps, quantile(pair_values, pair_probs, u), qoi)
        diff = direct - combined
        sum_d += float(np.sum(diff))
        sum_d2 += float(np.sum(diff * diff))
        count += size
    mean = sum_d / count
    variance = max((sum_d2 - sum_d**2 / count) / (count - 1), 0.0)
    return BiasEstimate(value=mean, stderr=math.sqrt(variance / count), h=h, samples=count)
