"""Run configuration: YAML file, environment and command-line overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from oamsim.errors import InputFormatError, ValidationError
from oamsim.optics import DEFAULT_L_MAX, DEFAULT_N, DEFAULT_SIDE_LENGTH, DEFAULT_W0

SEED_ENV = "OAMSIM_SEED"


def parse_range(spec) -> list[float]:
    """Inclusive ``"start:stop:step"`` range, or an explicit list of numbers."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, str):
        if ":" not in spec:
            return [float(v) for v in spec.split(",") if v.strip()]
        parts = [float(v) for v in spec.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValidationError(f"range must be start:stop:step with step > 0, got {spec!r}")
        start, stop, step = parts
        count = int(round((stop - start) / step)) + 1
        return [float(v) for v in np.round(start + step * np.arange(count), 10)]
    return [float(v) for v in spec]


@dataclass
class GridConfig:
    n: int = DEFAULT_N
    side_length: float = DEFAULT_SIDE_LENGTH
    w0: float = DEFAULT_W0


@dataclass
class NoiseConfig:
    poisson: bool = True
    pump_sigma: float = 0.05
    seed: int = 0


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    l_max: int = DEFAULT_L_MAX
    strengths: list = field(default_factory=lambda: parse_range("0:4:0.2"))
    n_masks: int = 30
    sidedness: list = field(default_factory=lambda: ["single", "double"])
    separation_z: float = 0.0
    directions: list = field(default_factory=lambda: ["forward", "backward"])
    betas: list = field(default_factory=lambda: parse_range("0.05:6:0.05"))
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    bands: bool = False
    trials: int = 1000
    level: float = 0.95
    total_counts: int = 10**6
    master_seed: int = 0
    screens: int = 200
    output: str = "out"
    workers: int = 1

    # not part of the reproducible record: they never change results
    RUNTIME_ONLY = ("output", "workers")

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if isinstance(self.grid, dict):
            self.grid = GridConfig(**self.grid)
        if isinstance(self.noise, dict):
            self.noise = NoiseConfig(**self.noise)
        self.strengths = parse_range(self.strengths)
        self.betas = parse_range(self.betas)
        if isinstance(self.sidedness, str):
            self.sidedness = [s for s in self.sidedness.split(",") if s]
        if isinstance(self.directions, str):
            self.directions = [s for s in self.directions.split(",") if s]
        if any(s < 0 for s in self.strengths) or not self.strengths:
            raise ValidationError("strengths must be a non-empty list of values >= 0")
        if any(b <= 0 for b in self.betas) or not self.betas:
            raise ValidationError("betas must be a non-empty list of positive values")
        if set(self.sidedness) - {"single", "double"} or not self.sidedness:
            raise ValidationError(f"sidedness must be drawn from single,double: {self.sidedness}")
        if set(self.directions) - {"forward", "backward"} or not self.directions:
            raise ValidationError(f"directions must be drawn from forward,backward: {self.directions}")
        if self.l_max < 1 or self.n_masks < 1 or self.trials < 0 or self.total_counts <= 0:
            raise ValidationError("l_max, n_masks, total_counts must be positive and trials >= 0")
        if self.bands and self.trials < 100:
            raise ValidationError("bands need at least 100 trials")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    def to_dict(self, record: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if record:
            for key in self.RUNTIME_ONLY:
                d.pop(key)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key, sub in (("grid", GridConfig), ("noise", NoiseConfig)):
            if key in data:
                value = data[key] or {}
                sub_known = {f.name for f in dataclasses.fields(sub)}
                if set(value) - sub_known:
                    raise ValidationError(f"unknown {key} keys: {sorted(set(value) - sub_known)}")
                data[key] = sub(**value)
        return cls(**data)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFormatError(f"cannot read config: {exc}", path) from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        line = exc.problem_mark.line + 1 if getattr(exc, "problem_mark", None) else None
        raise InputFormatError(f"malformed config: {exc}", path, line) from exc
    if not isinstance(data, dict):
        raise InputFormatError("config must be a mapping", path)
    return RunConfig.from_dict(data)


# flag name -> (section or None, key)
OVERRIDES = {
    "n": ("grid", "n"),
    "side_length": ("grid", "side_length"),
    "w0": ("grid", "w0"),
    "poisson": ("noise", "poisson"),
    "pump_sigma": ("noise", "pump_sigma"),
    "noise_seed": ("noise", "seed"),
}


def apply_overrides(cfg: RunConfig, overrides: dict, environ=os.environ) -> RunConfig:
    """Apply ``OAMSIM_SEED`` then non-None command-line values to ``cfg``."""
    data = cfg.to_dict()
    if environ.get(SEED_ENV):
        try:
            data["master_seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise ValidationError(f"{SEED_ENV} must be an integer") from exc
    for name, value in overrides.items():
        if value is None:
            continue
        if name in OVERRIDES:
            section, key = OVERRIDES[name]
            data[section][key] = value
        elif name in data:
            data[name] = value
        else:
            raise ValidationError(f"unknown override {name!r}")
    return RunConfig.from_dict(data)
