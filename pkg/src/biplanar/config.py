"""
Run configuration read from a ``key = value`` file with flag overrides.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, fields
from pathlib import Path

from . import fileio
from .drr import AttenuationModel, ProjectionGeometry
from .generator import GeneratorConfig
from .losses import LossWeights

log = logging.getLogger(__name__)

_GENERATOR_KEYS = ("input_size", "levels", "base_channels", "growth_rate", "dense_layers_per_block",
                   "connection_a_bottleneck_dim", "decoder_min_channels")


@dataclass
class RunConfig:
    seed: int = 0
    spacing: float = 1.0
    cube_mm: float = 320.0
    test_fraction: float = 0.1
    detector: int = 128
    mode: str = "parallel"
    step_mm: float | None = None
    mu_water: float = 0.02
    source_to_isocenter_mm: float = 1000.0
    source_to_detector_mm: float = 1500.0
    preset: str = "desk"
    input_size: int | None = None
    levels: int | None = None
    base_channels: int | None = None
    growth_rate: int | None = None
    dense_layers_per_block: int | None = None
    connection_a_bottleneck_dim: int | None = None
    decoder_min_channels: int | None = None
    biplanar: bool = False
    lambda1: float = 0.1
    lambda2: float = 10.0
    lambda3: float = 10.0
    iterations: int = 2000
    step: float | None = None
    init: str = "zeros"

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        values: dict[str, str] = {}
        if path is not None:
            path = Path(path)
            values = fileio.parse_key_values(path.read_text(), str(path))
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(k for k in values if k not in known)
        if unknown:
            log.warning("ignoring unknown config keys: %s", ", ".join(unknown))
        kw = {k: _convert(known[k], v) for k, v in values.items() if k in known}
        for k, v in (overrides or {}).items():
            if v is not None:
                kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.spacing <= 0 or self.cube_mm <= 0:
            raise ValueError("spacing and cube_mm must be positive")
        if not 0 <= self.test_fraction <= 1:
            raise ValueError(f"test_fraction must lie in [0, 1], got {self.test_fraction}")
        if self.detector < 1:
            raise ValueError(f"detector must be positive, got {self.detector}")
        if self.mode not in ("parallel", "cone", "cone_beam"):
            raise ValueError(f"mode must be parallel or cone, got {self.mode!r}")
        if self.preset not in ("desk", "full"):
            raise ValueError(f"preset must be desk or full, got {self.preset!r}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        self.loss_weights()

    def generator_config(self) -> GeneratorConfig:
        base = GeneratorConfig.desk() if self.preset == "desk" else GeneratorConfig()
        kw = {k: getattr(self, k) for k in _GENERATOR_KEYS if getattr(self, k) is not None}
        if "input_size" in kw:
            kw["output_size"] = kw["input_size"]
        return dataclasses.replace(base, biplanar=self.biplanar, **kw)

    def geometry(self) -> ProjectionGeometry:
        return ProjectionGeometry(
            mode="cone_beam" if self.mode.startswith("cone") else "parallel",
            detector_dims=(self.detector, self.detector),
            step_mm=self.step_mm,
            source_to_isocenter_mm=self.source_to_isocenter_mm,
            source_to_detector_mm=self.source_to_detector_mm,
        )

    def attenuation(self) -> AttenuationModel:
        return AttenuationModel(self.mu_water)

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3)


def _convert(f: dataclasses.Field, raw: str):
    kind = str(f.type)
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise fileio.HeaderError(f"config key {f.name}: cannot parse {raw!r} as {kind}") from None
    return raw
