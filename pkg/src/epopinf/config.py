"""Experiment configuration: dataclasses, TOML loading and validation."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .opinf import PROVENANCES
from .pde import SCHEMES

PROBLEMS = ("burgers", "kse")
DERIVATIVE_MODES = ("exact-rhs", "finite-difference")
PROFILES = ("desk", "paper")

# continuous parameters are sampled from [lo, hi]; the rest are discrete choices
IC_PARAMETERS = {
    "burgers": {"A": "continuous", "f": "discrete", "phi": "continuous"},
    "kse": {"a": "continuous", "b": "continuous"},
}


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class GridConfig:
    n: int
    L: float


@dataclass(frozen=True)
class TestICConfig:
    count: int = 0
    seed: int | None = None
    inside: dict = field(default_factory=dict)
    outside: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MetricsConfig:
    autocorrelation: bool = False
    k_max: int = 400
    burn_in: int = 0
    autocorr_r: list = field(default_factory=list)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    grid: GridConfig
    mu: float
    dt: float
    T: float
    stride: int
    scheme: str
    training_ics: dict
    r_max: int
    r_list: list
    method_list: list
    test_ics: TestICConfig = field(default_factory=TestICConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    ridge: float = 0.0
    derivative_mode: str = "exact-rhs"
    output_dir: str = "runs/experiment"

    def __post_init__(self):
        _validate(self)

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, seed=None, output_dir=None):
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, test_ics=dataclasses.replace(cfg.test_ics, seed=int(seed)))
        if output_dir is not None:
            cfg = dataclasses.replace(cfg, output_dir=str(output_dir))
        return cfg


def _validate(cfg):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.problem in PROBLEMS, f"problem must be one of {PROBLEMS}")
    need(cfg.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
    need(cfg.derivative_mode in DERIVATIVE_MODES,
         f"derivative_mode must be one of {DERIVATIVE_MODES}")
    need(cfg.dt > 0 and cfg.T > 0, "dt and T must be positive")
    need(cfg.mu > 0, "mu must be positive")
    need(cfg.stride >= 1, "stride must be >= 1")
    need(cfg.grid.n >= (6 if cfg.problem == "kse" else 4), "grid too small for the stencil")
    need(cfg.grid.L > 0, "grid.L must be positive")
    need(cfg.ridge >= 0, "ridge must be nonnegative")
    need(cfg.r_max >= 1, "r_max must be positive")
    need(len(cfg.r_list) > 0 and all(1 <= r <= cfg.r_max for r in cfg.r_list),
         "r_list entries must lie in [1, r_max]")
    need(len(cfg.method_list) > 0 and all(m in PROVENANCES for m in cfg.method_list),
         f"method_list entries must be in {PROVENANCES}")
    need(all(1 <= r <= cfg.r_max for r in cfg.metrics.autocorr_r),
         "metrics.autocorr_r entries must lie in [1, r_max]")
    need(cfg.metrics.k_max >= 0 and cfg.metrics.burn_in >= 0, "k_max and burn_in must be >= 0")

    params = IC_PARAMETERS[cfg.problem]
    need(set(cfg.training_ics) == set(params),
         f"training_ics must list exactly {sorted(params)}")
    need(all(len(v) > 0 for v in cfg.training_ics.values()), "training_ics lists must be nonempty")
    t = cfg.test_ics
    need(t.count >= 0, "test_ics.count must be >= 0")
    if t.count > 0:
        need(t.seed is not None, "test_ics.seed is required when test ICs are sampled")
        for region in ("inside", "outside"):
            spec = getattr(t, region)
            need(set(spec) == set(params), f"test_ics.{region} must define {sorted(params)}")
            for name, kind in params.items():
                if kind == "continuous":
                    rng = spec[name]
                    need(isinstance(rng, list) and len(rng) == 2 and rng[0] <= rng[1],
                         f"test_ics.{region}.{name} must be [lo, hi]")
                else:
                    need(len(spec[name]) > 0, f"test_ics.{region}.{name} needs choices")
        for name, kind in params.items():
            if kind == "continuous":
                (ilo, ihi), (olo, ohi) = t.inside[name], t.outside[name]
                need(olo <= ilo and ihi <= ohi and (olo < ilo or ihi < ohi),
                     f"test_ics.outside.{name} must strictly enclose the inside range")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where or '<root>'} must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where or '<root>'}: {sorted(unknown)}")
    return data


def config_from_dict(data):
    data = dict(_build(ExperimentConfig, data, ""))
    try:
        data["grid"] = GridConfig(**_build(GridConfig, data["grid"], "grid"))
        if "test_ics" in data:
            data["test_ics"] = TestICConfig(**_build(TestICConfig, data["test_ics"], "test_ics"))
        if "metrics" in data:
            data["metrics"] = MetricsConfig(**_build(MetricsConfig, data["metrics"], "metrics"))
        return ExperimentConfig(**data)
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc}") from exc
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def builtin_config(problem, profile):
    if problem not in PROBLEMS or profile not in PROFILES:
        raise ConfigError(f"no built-in config for {problem!r}/{profile!r}")
    text = resources.files("epopinf").joinpath("configs", f"{problem}_{profile}.toml").read_text()
    return config_from_dict(tomllib.loads(text))
