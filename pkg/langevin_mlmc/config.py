"""
Experiment configuration: problem catalogue, method table and YAML loading.

An experiment file is a single YAML mapping:

    name: harmonic_set1_seg
    problem: harmonic_set1
    method: SEG         # or a list of method tags
    eps: [4.0e-3, 2.0e-3, 1.0e-3]
    T: 1.0              # or a list for a T-sweep
    repeat: 1
    seed: 12345
    levels: auto        # or a fixed finest level
    baseline: false     # also run the MC-EMG baseline

Classes:
    Problem: model, quantity of interest and reference value
    MethodSpec: integrator settings behind a method tag
    ExperimentSpec: one parsed experiment (single end time)

Main Functions:
    make_problem: build a catalogue problem with optional overrides
    load_experiments: parse an experiment file into ExperimentSpecs
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import yaml

from .errors import ConfigError, InputError, MlmcError
from .exact_coarse import DEFAULT_BUDGET
from .increments import DistributionKind
from .integrators import Scheme
from .mlmc import DEFAULT_N_MIN
from .model import (
    DoubleWell,
    GaussianBump,
    Harmonic,
    LangevinModel,
    QoI,
    ShiftedSquare,
    exact_qoi_expectation,
    harmonic_exact_law,
)

# E[(Q + 1)^2 + P^2] for the double well, computed once with a fine extrapolated run
DOUBLE_WELL_REFERENCE = {
    1.0: 4.52782626985,
    2.0: 6.11075602345,
    4.0: 7.11570774835,
    8.0: 7.2125872733,
}

DEFAULT_PILOT_SAMPLES = 1000
DEFAULT_BIAS_SAMPLES = 100000

ALLOWED_KEYS = {
    "name",
    "problem",
    "method",
    "eps",
    "T",
    "repeat",
    "seed",
    "levels",
    "m0",
    "n_min",
    "pilot_samples",
    "budget",
    "model",
    "bias_levels",
    "bias_samples",
    "baseline",
    "threads",
}

MODEL_KEYS = {"potential", "qoi", "omega0", "qmin", "lam", "sigma", "q0", "p0"}


# =============================================================================
# Problems
# =============================================================================


@dataclass(frozen=True)
class Problem:
    name: str
    model: LangevinModel
    qoi: QoI
    reference: Optional[float]


def _harmonic(omega0: float, lam: float, sigma: float) -> Dict[str, Any]:
    return {"potential": "harmonic", "qoi": "gaussian_bump", "omega0": omega0, "lam": lam, "sigma": sigma}


PROBLEMS: Dict[str, Dict[str, Any]] = {
    "harmonic_set1": _harmonic(1.0, 4.0, 2.0),
    "harmonic_set2": _harmonic(1.0, 9.0, 3.0),
    "harmonic_small_noise": _harmonic(1.0, 1.0, 0.4),
    "double_well": {
        "potential": "double_well",
        "qoi": "shifted_square",
        "omega0": 1.0,
        "qmin": 1.0,
        "lam": 2.0,
        "sigma": 4.0,
    },
    "custom": {},
}

POTENTIALS: Dict[str, Callable[[Dict[str, Any]], Any]] = {
    "harmonic": lambda p: Harmonic(float(p["omega0"])),
    "double_well": lambda p: DoubleWell(float(p["omega0"]), float(p.get("qmin", 1.0))),
}

QOIS: Dict[str, Callable[[Dict[str, Any]], QoI]] = {
    "gaussian_bump": lambda p: GaussianBump(),
    "shifted_square": lambda p: ShiftedSquare(float(p.get("qmin", 1.0))),
}


def problem_parameters(problem: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Catalogue parameters of `problem` with `overrides` applied."""
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem '{problem}' (choose from {', '.join(PROBLEMS)})")
    overrides = dict(overrides or {})
    unknown = set(overrides) - MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {', '.join(sorted(unknown))}")
    params = {"q0": -1.0, "p0": -1.0}
    params.update(PROBLEMS[problem])
    params.update(overrides)
    missing = {"potential", "qoi", "lam", "sigma"} - set(params)
    if problem == "custom" and missing:
        raise ConfigError(f"custom problem needs model keys: {', '.join(sorted(missing))}")
    return params


def reference_value(problem: str, model: LangevinModel, qoi: QoI) -> Optional[float]:
    """Oracle value for harmonic problems, pinned constants for the double well."""
    if isinstance(model.potential, Harmonic) and model.dim == 1:
        return exact_qoi_expectation(harmonic_exact_law(model, model.T), qoi)
    if problem == "double_well":
        return DOUBLE_WELL_REFERENCE.get(float(model.T))
    return None


def make_problem(problem: str, T: float = 1.0, overrides: Optional[Dict[str, Any]] = None) -> Problem:
    """Build a catalogue problem at end time T.

    Raises:
        ConfigError: unknown problem, potential or QoI, or invalid parameters
    """
    params = problem_parameters(problem, overrides)
    try:
        potential = POTENTIALS[params["potential"]](params)
        qoi = QOIS[params["qoi"]](params)
    except KeyError as e:
        raise ConfigError(f"problem '{problem}': unknown or incomplete setting {e}") from e
    try:
        model = LangevinModel(
            potential,
            float(params["lam"]),
            float(params["sigma"]),
            params["q0"],
            params["p0"],
            float(T),
        )
    except InputError as e:
        raise ConfigError(f"problem '{problem}': {e}") from e
    return Problem(problem, model, qoi, reference_value(problem, model, qoi))


# =============================================================================
# Methods
# =============================================================================


@dataclass(frozen=True)
class MethodSpec:
    """Integrator settings behind a method tag.

    Attributes:
        fixed_L: finest level pinned by the method (M0 is then solved instead)
        baseline: single-level Monte Carlo instead of MLMC
    """

    tag: str
    scheme: Scheme
    M0: int
    dist: DistributionKind = DistributionKind.GAUSSIAN
    extrapolate: bool = False
    exact_coarse: bool = False
    fixed_L: Optional[int] = None
    baseline: bool = False

    @property
    def alpha(self) -> int:
        return self.scheme.weak_order


EM = Scheme.EULER_MARUYAMA
SE = Scheme.SYMPLECTIC_EULER_OU
SV = Scheme.STORMER_VERLET_OU
THREE = DistributionKind.THREE_POINT
FOUR = DistributionKind.FOUR_POINT

METHODS: Dict[str, MethodSpec] = {
    m.tag: m
    for m in [
        MethodSpec("MC-EMG", EM, 4, baseline=True),
        MethodSpec("EMG", EM, 4),
        MethodSpec("EMG+", EM, 8),
        MethodSpec("SEG", SE, 4),
        MethodSpec("SVG", SV, 4),
        MethodSpec("EMGe", EM, 4, extrapolate=True),
        MethodSpec("EMGe+", EM, 8, extrapolate=True),
        MethodSpec("SEGe", SE, 4, extrapolate=True),
        MethodSpec("SVGe", SV, 4, extrapolate=True, fixed_L=2),
        MethodSpec("SE3-", SE, 4, THREE, exact_coarse=True),
        MethodSpec("SE3", SE, 8, THREE, exact_coarse=True),
        MethodSpec("SE3+", SE, 16, THREE, exact_coarse=True),
        MethodSpec("SE4", SE, 8, FOUR, exact_coarse=True),
    ]
}


def get_method(tag: str) -> MethodSpec:
    if tag not in METHODS:
        raise ConfigError(f"unknown method '{tag}' (choose from {', '.join(METHODS)})")
    return METHODS[tag]


# =============================================================================
# Experiments
# =============================================================================


@dataclass
class ExperimentSpec:
    """One experiment at a single end time T."""

    name: str
    problem: str
    method: str
    eps_list: List[float]
    T: float = 1.0
    repeat: int = 1
    seed: int = 0
    levels: Optional[int] = None
    m0: Optional[int] = None
    n_min: int = DEFAULT_N_MIN
    pilot_samples: int = DEFAULT_PILOT_SAMPLES
    budget: int = DEFAULT_BUDGET
    model: Dict[str, Any] = field(default_factory=dict)
    bias_levels: List[int] = field(default_factory=list)
    bias_samples: int = DEFAULT_BIAS_SAMPLES
    baseline: bool = False
    threads: int = 1

    def __post_init__(self):
        get_method(self.method)
        problem_parameters(self.problem, self.model)
        if not self.eps_list:
            raise ConfigError("at least one eps is required")
        if any(not eps > 0.0 for eps in self.eps_list):
            raise ConfigError(f"eps values must be positive: {self.eps_list}")
        if not self.T > 0.0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.repeat < 1:
            raise ConfigError(f"repeat must be at least 1, got {self.repeat}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.levels is not None and self.levels < 0:
            raise ConfigError(f"levels must be nonnegative or 'auto', got {self.levels}")
        if self.m0 is not None and self.m0 < 1:
            raise ConfigError(f"m0 must be positive, got {self.m0}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")

    @property
    def method_spec(self) -> MethodSpec:
        return get_method(self.method)

    def problem_instance(self) -> Problem:
        return make_problem(self.problem, self.T, self.model)

    def with_overrides(self, **changes) -> "ExperimentSpec":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _as_list(value, cast) -> List:
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(value)]


def _parse_levels(value) -> Optional[int]:
    if value is None or value == "auto":
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"levels must be an integer or 'auto', got {value!r}")
    return value


def parse_experiments(
    raw: Dict[str, Any], default_seed: int = 0, source: str = "<config>", default_threads: int = 1
) -> List[ExperimentSpec]:
    """ExperimentSpecs from a parsed mapping, one per (method, end time).

    default_seed and default_threads apply when the mapping leaves them out.
    """
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    unknown = set(raw) - ALLOWED_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys: {', '.join(sorted(unknown))}")
    for key in ("problem", "method", "eps"):
        if key not in raw:
            raise ConfigError(f"{source}: missing required key '{key}'")

    try:
        base = dict(
            name=str(raw.get("name", Path(source).stem)),
            problem=str(raw["problem"]),
            eps_list=_as_list(raw["eps"], float),
            repeat=int(raw.get("repeat", 1)),
            seed=int(raw.get("seed", default_seed)),
            levels=_parse_levels(raw.get("levels")),
            m0=None if raw.get("m0") is None else int(raw["m0"]),
            n_min=int(raw.get("n_min", DEFAULT_N_MIN)),
            pilot_samples=int(raw.get("pilot_samples", DEFAULT_PILOT_SAMPLES)),
            budget=int(raw.get("budget", DEFAULT_BUDGET)),
            model=dict(raw.get("model") or {}),
            bias_levels=_as_list(raw.get("bias_levels", []), int),
            bias_samples=int(raw.get("bias_samples", DEFAULT_BIAS_SAMPLES)),
            baseline=bool(raw.get("baseline", False)),
            threads=int(raw.get("threads", default_threads)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source}: {e}") from e

    methods = _as_list(raw["method"], str)
    end_times = _as_list(raw.get("T", 1.0), float)
    specs = []
    for method in methods:
        for T in end_times:
            # one set of output files per method and end time
            name = base["name"]
            if len(methods) > 1:
                name += f"_{method}"
            if len(end_times) > 1:
                name += f"_T{T:g}"
            try:
                specs.append(ExperimentSpec(method=method, T=T, **dict(base, name=name)))
            except MlmcError as e:
                raise ConfigError(f"{source}: {e}") from e
    return specs


def load_experiments(path: Union[str, Path], default_seed: int = 0, default_threads: int = 1) -> List[ExperimentSpec]:
    """Read an experiment YAML file.

    Raises:
        ConfigError: the file is missing, is not valid YAML or has invalid settings
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    return parse_experiments(raw, default_seed, str(path), default_threads)
