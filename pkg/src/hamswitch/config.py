"""Run configuration: YAML file merged with command-line overrides, then validated."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigurationError

OUTPUT_ENV = "HAMSWITCH_OUTPUT_DIR"

# keys that never influence results and are left out of the config hash
_UNHASHED = ("output_dir", "workers", "config")


@dataclass
class RunConfig:
    command: str = ""
    system: str = "vanderpol-2regime"
    params: dict = field(default_factory=dict)
    seed: int = 0
    mode: str = "thinning"
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    output_dir: str | None = None

    T: float = 1.0
    dt: float = 1e-3
    n_paths: int = 1000
    x0: list = field(default_factory=lambda: [0.0])
    y0: list = field(default_factory=lambda: [0.0])
    k0: int = 1
    t: float = 1.0

    target_lo: list | None = None
    target_hi: list | None = None
    target_regime: int | None = None

    alpha: float | None = None
    i_max: int = 1
    f_const: float = 1.0

    candidate: str = "builtin-H"
    box: float = 10.0
    grid_n: int = 81
    radii: list = field(default_factory=lambda: [2.0, 5.0, 10.0, 20.0, 50.0, 100.0])
    conditions: dict = field(default_factory=dict)

    regime_frozen: int | None = None
    bin_width: float = 0.1
    bin_range: list = field(default_factory=lambda: [-4.0, 4.0])
    burn_in: float = 0.1
    replicas: int = 100

    times: list = field(default_factory=lambda: [0.25 * i for i in range(1, 13)])
    x0b: list = field(default_factory=lambda: [-3.0])
    y0b: list = field(default_factory=lambda: [0.0])
    k0b: int = 2

    drift: float = 1.0
    start: float = 0.0
    level: float = 1.0
    horizon: float = 50.0
    lam: float = 1.0

    hs: list = field(default_factory=lambda: [0.1, 0.01, 0.001])
    function: str = "all"
    bias_constant: float = 10.0

    config: str | None = None

    def validate(self) -> "RunConfig":
        positive = ("T", "dt", "n_paths", "t", "box", "grid_n", "bin_width", "replicas",
                    "horizon", "workers")
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigurationError(f"{name} must be positive, got {value!r}")
        for name in ("n_paths", "grid_n", "replicas", "workers", "seed", "k0", "k0b", "i_max"):
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigurationError(f"{name} must be an integer, got {value!r}")
            setattr(self, name, int(value))
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.mode not in ("thinning", "weighted"):
            raise ConfigurationError(f"mode must be thinning or weighted, got {self.mode!r}")
        if not 0 <= self.burn_in < 1:
            raise ConfigurationError("burn_in is a fraction in [0, 1)")
        if self.lam < 0:
            raise ConfigurationError("lam must be non-negative")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if len(self.bin_range) != 2 or not self.bin_range[0] < self.bin_range[1]:
            raise ConfigurationError("bin_range needs [lo, hi] with lo < hi")
        if not isinstance(self.params, dict) or not isinstance(self.conditions, dict):
            raise ConfigurationError("params and conditions are mappings")
        return self

    def digest(self) -> str:
        data = {k: v for k, v in asdict(self).items() if k not in _UNHASHED}
        blob = json.dumps(data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def resolved_output_dir(self) -> str:
        return self.output_dir or os.environ.get(OUTPUT_ENV) or "."


KNOWN_KEYS = {f.name for f in fields(RunConfig)}


def load_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    """Merge file values with overrides (``None`` overrides are ignored); reject unknown keys."""
    merged = dict(file_values)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("params", "conditions") and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    unknown = sorted(set(merged) - KNOWN_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    return cfg.validate()
