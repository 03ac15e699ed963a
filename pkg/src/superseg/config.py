"""All pipeline tunables in one place."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .merging import MergeConfig
from .primitives import PrimitiveConfig


@dataclass(frozen=True)
class PipelineConfig:
    knn_k: int = 30
    w_n: float = 0.96
    w_c: float = 0.04
    fzs_k: float = 0.06
    min_segment_size: int = 20
    graph_knn: int = 8
    depth_tolerance_m: float = 0.05
    min_gamma: float = 1e-4
    delta1_schedule: tuple = (0.9, 0.8, 0.7, 0.6, 0.5)
    delta2: float = 0.75
    distance_floor: float = 1.0
    ascending_boxes: bool = True
    exclusion_after_claim: bool = True
    confidence_proxy: str = "point_count"

    def __post_init__(self):
        object.__setattr__(self, "delta1_schedule", tuple(float(t) for t in self.delta1_schedule))
        if self.knn_k < 3:
            raise ConfigError("knn_k must be >= 3")
        if self.depth_tolerance_m <= 0:
            raise ConfigError("depth_tolerance_m must be positive")
        if self.min_gamma < 0:
            raise ConfigError("min_gamma must be non-negative")
        if self.confidence_proxy != "point_count":
            raise ConfigError("confidence_proxy supports only 'point_count'")
        try:
            self.primitive()
            self.merge()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def primitive(self) -> PrimitiveConfig:
        return PrimitiveConfig(self.w_n, self.w_c, self.fzs_k, self.min_segment_size, self.graph_knn)

    def merge(self) -> MergeConfig:
        return MergeConfig(self.delta1_schedule, self.delta2, self.distance_floor,
                           self.ascending_boxes, self.exclusion_after_claim)

    def to_dict(self):
        d = asdict(self)
        d["delta1_schedule"] = list(self.delta1_schedule)
        return d

    @classmethod
    def from_dict(cls, obj) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")
