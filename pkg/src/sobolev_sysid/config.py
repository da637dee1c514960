"""Run configuration: typed sections, strict YAML loading and the two presets.

Every section is a frozen dataclass.  ``from_dict`` rejects unknown keys at
every level and coerces scalars, so a config is fully validated before any
computation starts.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

EXPERIMENTS = ("univariate", "chua", "custom")
DERIVATIVE_SOURCES = ("none", "data", "true", "estimated")


@dataclass(frozen=True)
class UnivariateConfig:
    L: int = 100
    domain: tuple[float, float] = (-2.0, 3.0)
    noise_std: float = 0.05
    L_validation: int = 1000
    max_degree: int = 5

    def validate(self):
        if self.L < 2 or self.L_validation < 2:
            raise ConfigError("univariate.L and univariate.L_validation must be >= 2")
        if not self.domain[0] < self.domain[1]:
            raise ConfigError("univariate.domain must satisfy lower < upper")
        if self.noise_std < 0:
            raise ConfigError("univariate.noise_std must be >= 0")
        if self.max_degree < 0:
            raise ConfigError("univariate.max_degree must be >= 0")


@dataclass(frozen=True)
class ChuaConfig:
    alpha: float = 10.4
    beta: float = 16.5
    R: float = 0.1
    c1: float = -1.16
    c3: float = 0.041
    Ts: float = 0.01
    duration: float = 60.0
    input_std: float = 1.0
    disturbance_std: float = 0.01
    x0: tuple[float, float, float] = (0.1, 0.0, 0.0)
    n_a: int = 3
    n_b: int = 2
    input_delay: int = 1
    horizons: tuple[int, ...] = (3, 5, 7)
    max_degree: int = 1

    def validate(self):
        if not self.Ts > 0 or not self.duration > 0:
            raise ConfigError("chua.Ts and chua.duration must be positive")
        if self.input_std < 0 or self.disturbance_std < 0:
            raise ConfigError("chua noise standard deviations must be >= 0")
        if not self.horizons or any(k < 1 for k in self.horizons):
            raise ConfigError("chua.horizons must be a non-empty list of integers >= 1")
        if self.n_a < 1 or self.n_b < 0 or self.input_delay < 0:
            raise ConfigError("chua lags need n_a >= 1, n_b >= 0, input_delay >= 0")


@dataclass(frozen=True)
class CustomConfig:
    """Fit models to a CSV dataset and score them on a second CSV."""

    data: str = ""
    validation: str = ""
    max_degree: int = 1

    def validate(self):
        if not self.data or not self.validation:
            raise ConfigError("custom.data and custom.validation must name CSV files")


@dataclass(frozen=True)
class ModelConfig:
    """One identified model.

    ``derivative_weight`` and ``mu_derivative`` apply to every derivative
    channel.  ``structure`` is only used by the Chua experiment: ``one_step``
    models are iterated, ``direct`` models are refitted for each horizon.
    ``mu_value = null`` with method 1 estimates the bounds from data.
    """

    name: str = "model"
    method: int = 2
    r: int = 1
    q: str = "2"
    value_weight: float = 1.0
    derivative_weight: float = 0.0
    Lambda: float = 1.0
    mu_value: float | None = None
    mu_derivative: float | None = None
    derivatives: str = "none"
    structure: str = "one_step"

    def validate(self):
        if not self.name or any(c in self.name for c in "/\\ "):
            raise ConfigError(f"model name {self.name!r} must be non-empty without spaces or slashes")
        if self.method not in (1, 2):
            raise ConfigError(f"model {self.name}: method must be 1 or 2")
        if self.r not in (1, 2):
            raise ConfigError(f"model {self.name}: r must be 1 or 2")
        if self.q not in ("2", "inf"):
            raise ConfigError(f"model {self.name}: q must be '2' or 'inf'")
        if self.method == 2 and self.q != "2":
            raise ConfigError(f"model {self.name}: method 2 uses q = 2")
        if self.value_weight < 0 or self.derivative_weight < 0 or self.Lambda < 0:
            raise ConfigError(f"model {self.name}: weights and Lambda must be >= 0")
        if self.method == 2 and self.value_weight == 0 and self.derivative_weight == 0:
            raise ConfigError(f"model {self.name}: at least one weight must be positive")
        if self.derivatives not in DERIVATIVE_SOURCES:
            raise ConfigError(f"model {self.name}: derivatives must be one of {DERIVATIVE_SOURCES}")
        if self.structure not in ("one_step", "direct"):
            raise ConfigError(f"model {self.name}: structure must be 'one_step' or 'direct'")
        for mu in (self.mu_value, self.mu_derivative):
            if mu is not None and not mu >= 0:
                raise ConfigError(f"model {self.name}: noise radii must be >= 0")

    @property
    def uses_derivatives(self) -> bool:
        if self.method == 2:
            return self.derivative_weight > 0
        return self.derivatives != "none"


@dataclass(frozen=True)
class GradEstSection:
    radius: float | None = None
    radius_fraction: float = 0.05
    min_neighbors: int | None = None
    smoothing: float = 0.0

    def validate(self):
        if self.radius is not None and not self.radius > 0:
            raise ConfigError("gradest.radius must be positive")
        if not self.radius_fraction > 0:
            raise ConfigError("gradest.radius_fraction must be positive")
        if self.smoothing < 0:
            raise ConfigError("gradest.smoothing must be >= 0")


@dataclass(frozen=True)
class BoundsSection:
    """Uncertainty envelopes for one model (``horizon`` selects the direct Chua model)."""

    enabled: bool = True
    model: str = ""
    horizon: int | None = None
    nu: float = 1.1
    zeta_r: float | None = None
    zeta_a: float | None = None
    channels: tuple[int, ...] = (0,)

    def validate(self):
        if self.nu < 1:
            raise ConfigError("bounds.nu must be >= 1")
        if (self.zeta_r is None) != (self.zeta_a is None):
            raise ConfigError("bounds.zeta_r and bounds.zeta_a must be given together")
        if self.zeta_r is not None and (self.zeta_r < 0 or self.zeta_a < 0):
            raise ConfigError("bounds.zeta_r and bounds.zeta_a must be >= 0")


@dataclass(frozen=True)
class SolverSection:
    max_iterations: int = 50000
    tol: float = 1e-9
    plateau_window: int = 1000

    def validate(self):
        if self.max_iterations < 1 or not self.tol > 0 or self.plateau_window < 1:
            raise ConfigError("solver settings must be positive")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "univariate"
    seed: int = 1
    univariate: UnivariateConfig = field(default_factory=UnivariateConfig)
    chua: ChuaConfig = field(default_factory=ChuaConfig)
    custom: CustomConfig = field(default_factory=CustomConfig)
    models: tuple[ModelConfig, ...] = ()
    gradest: GradEstSection = field(default_factory=GradEstSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    solver: SolverSection = field(default_factory=SolverSection)

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if not self.models:
            raise ConfigError("at least one model must be configured")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"model names must be unique, got {names}")
        for section in (self.gradest, self.bounds, self.solver, *self.models):
            section.validate()
        getattr(self, self.experiment).validate()
        if self.bounds.enabled and self.bounds.model not in names:
            raise ConfigError(f"bounds.model {self.bounds.model!r} is not a configured model")
        if self.experiment == "chua" and self.bounds.enabled:
            bounded = next(m for m in self.models if m.name == self.bounds.model)
            if bounded.structure == "direct" and self.bounds.horizon not in self.chua.horizons:
                raise ConfigError(f"bounds.horizon must be one of chua.horizons {list(self.chua.horizons)}")
        for m in self.models:
            if self.experiment != "chua" and m.derivatives == "true":
                raise ConfigError(f"model {m.name}: true derivatives exist only for the chua experiment")
            if self.experiment == "chua" and m.derivatives == "data":
                raise ConfigError(f"model {m.name}: chua data carry no measured derivatives")
            if m.uses_derivatives and m.derivatives == "none":
                raise ConfigError(f"model {m.name}: derivative channels requested but derivatives = 'none'")
        return self

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def sha256(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, where)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(f"{where}: null is not allowed")
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{where}[{j}]") for j, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(a, v, f"{where}[{j}]") for j, (a, v) in enumerate(zip(args, value)))
    if value is None:
        raise ConfigError(f"{where}: null is not allowed")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return float(value)
    if tp is str:
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        if isinstance(value, (int, float)):
            return "inf" if value == math.inf else str(int(value)) if float(value).is_integer() else str(value)
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def _from_dict(cls, data, where: str = "config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a validated config; keys in ``data`` override ``base`` section by section."""
    if base is not None:
        merged = base.to_dict()
        for k, v in (data or {}).items():
            if isinstance(v, dict) and isinstance(merged.get(k), dict):
                merged[k] = {**merged[k], **v}
            else:
                merged[k] = copy.deepcopy(v)
        data = merged
    return _from_dict(RunConfig, data).validate()


def load_config(path) -> RunConfig:
    """Read a YAML run config.  A ``preset`` key selects the base config to override."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    preset = data.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = PRESETS[preset]() if preset is not None else None
    return config_from_dict(data, base)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None)


def univariate_preset() -> RunConfig:
    models = (
        ModelConfig(name="model1", method=2, r=1, value_weight=1.0, derivative_weight=0.0, Lambda=1.0,
                    derivatives="none"),
        ModelConfig(name="model2", method=2, r=1, value_weight=1.0, derivative_weight=2.0, Lambda=1.0,
                    derivatives="data"),
    )
    return RunConfig(
        experiment="univariate",
        models=models,
        bounds=BoundsSection(enabled=True, model="model2", nu=1.1, channels=(0, 1)),
    ).validate()


def chua_preset() -> RunConfig:
    def m(name, structure, derivatives):
        weight = 0.0 if derivatives == "none" else 200.0
        return ModelConfig(name=name, method=2, r=1, value_weight=1.0, derivative_weight=weight, Lambda=50.0,
                           derivatives=derivatives, structure=structure)

    models = (
        m("P1_NOD", "one_step", "none"),
        m("P1_D", "one_step", "true"),
        m("P1_ED", "one_step", "estimated"),
        m("PK_NOD", "direct", "none"),
        m("PK_ED", "direct", "estimated"),
    )
    return RunConfig(
        experiment="chua",
        models=models,
        gradest=GradEstSection(radius_fraction=0.2),
        bounds=BoundsSection(enabled=True, model="PK_ED", horizon=3, nu=1.1, channels=(0,)),
    ).validate()


PRESETS = {"univariate": univariate_preset, "chua": chua_preset}
