"""Pipeline configuration: ``key = value`` files, env overrides, seeded RNGs."""
from __future__ import annotations

import dataclasses
import os
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError

ENV_PREFIX = "POVMAP_"


def parse_key_values(stream) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    text = stream if isinstance(stream, str) else stream.read()
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"expected 'key = value', got {line!r}", lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InputError("empty key", lineno)
        out[key] = value.strip()
    return out


def default_lambda_grid():
    return [float(v) for v in np.logspace(-3, 3, 9)]


@dataclass
class PipelineConfig:
    vnl: Optional[str] = None
    worldpop: Optional[str] = None
    aoi: Optional[str] = None
    centroids: Optional[str] = None
    annotations: Optional[str] = None
    image_dims: Optional[str] = None
    class_map: Optional[str] = None
    detections: Optional[str] = None
    ground_truth: Optional[str] = None
    image_map: Optional[str] = None
    provinces: Optional[str] = None
    ensemble: Optional[str] = None
    split: Optional[str] = None
    tile_side_m: float = 450.0
    min_pop: float = 2.0
    gmm_k: int = 3
    chip_size: int = 416
    chips_per_image: int = 4
    conf_threshold: float = 0.5
    iou_threshold: float = 0.5
    test_fraction: float = 0.2
    cv_k: int = 5
    lambda_grid: list = field(default_factory=default_lambda_grid)
    ridge_lambda: float = 1.0
    seed: Optional[int] = None
    clip_retention: float = 0.25
    min_instances: int = 10

    def validate(self):
        checks = [
            (self.tile_side_m > 0, "tile_side_m must be > 0"),
            (self.min_pop >= 0, "min_pop must be >= 0"),
            (self.gmm_k >= 1, "gmm_k must be >= 1"),
            (self.chip_size >= 1, "chip_size must be >= 1"),
            (self.chips_per_image >= 0, "chips_per_image must be >= 0"),
            (0 <= self.conf_threshold <= 1, "conf_threshold must be in [0, 1]"),
            (0 < self.iou_threshold <= 1, "iou_threshold must be in (0, 1]"),
            (0 < self.test_fraction < 1, "test_fraction must be in (0, 1)"),
            (self.cv_k >= 2, "cv_k must be >= 2"),
            (len(self.lambda_grid) > 0 and min(self.lambda_grid) >= 0,
             "lambda_grid must be non-empty and non-negative"),
            (self.ridge_lambda >= 0, "ridge_lambda must be >= 0"),
            (0 <= self.clip_retention <= 1, "clip_retention must be in [0, 1]"),
            (self.min_instances >= 0, "min_instances must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InputError(msg)
        return self

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise InputError(f"missing config key(s): {', '.join(missing)}")


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name, raw):
    if name not in _FIELDS:
        raise InputError(f"unknown config key {name!r}")
    default = _FIELDS[name].default
    if name == "lambda_grid":
        if isinstance(raw, (list, tuple)):
            return [float(v) for v in raw]
        return [float(t) for t in str(raw).replace(",", " ").split()]
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if name == "seed":
            return int(raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InputError(f"config key {name!r}: bad value {raw!r}") from None
    return raw


def load_config(path=None, overrides=None, environ=None) -> PipelineConfig:
    """Merge defaults < config file < environment < explicit overrides."""
    values = {}
    if path is not None:
        with open(path) as fh:
            for key, raw in parse_key_values(fh).items():
                values[key] = _coerce(key, raw)
    environ = os.environ if environ is None else environ
    for key, raw in environ.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in _FIELDS:
                values[name] = _coerce(name, raw)
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = _coerce(key, raw)
    return PipelineConfig(**values).validate()


def stage_seed(seed: int, label: str) -> np.random.SeedSequence:
    """Seed sequence for one pipeline stage, stable across runs and platforms."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(label.encode()),))


def stage_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(stage_seed(seed, label))
