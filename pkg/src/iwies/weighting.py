"""Instance weights from novelty and quality, via a tempered softmax.

Every weight vector produced here sums to the population size ``m``, so uniform
weighting is the all-ones vector and the weighted ES estimator collapses to the
plain one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .behavior import BehaviorCharacterization, distance


class Metric(str, Enum):
    UNIFORM = "Uniform"
    NOVELTY = "Novelty"
    QUALITY = "Quality"
    MIX = "Mix"


@dataclass(frozen=True)
class WeightingConfig:
    metric: Metric = Metric.UNIFORM
    rho0: float = 1.0
    delta_rho: float = 0.01
    normalize_metrics: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", Metric(self.metric))
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be > 0, got {self.rho0}")
        if not self.delta_rho >= 0:
            raise ValueError(f"delta_rho must be >= 0, got {self.delta_rho}")

    @property
    def uses_novelty(self) -> bool:
        return self.metric in (Metric.NOVELTY, Metric.MIX)


@dataclass(frozen=True)
class PopulationMetrics:
    novelty: tuple[float, ...]
    quality: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "novelty", tuple(float(v) for v in self.novelty))
        object.__setattr__(self, "quality", tuple(float(v) for v in self.quality))
        if len(self.novelty) != len(self.quality):
            raise ValueError("novelty and quality lengths differ")
        if not all(map(math.isfinite, self.novelty + self.quality)):
            raise ValueError("population metrics must be finite")

    @property
    def m(self) -> int:
        return len(self.novelty)


def novelty_of(bc: BehaviorCharacterization, bc_prev_opt: BehaviorCharacterization) -> float:
    """Behavioral distance of an instance from the previous optimum."""
    return distance(bc, bc_prev_opt)


def quality_of(trace) -> float:
    return trace.episode_return


def softmax_weights(values: Sequence[float], rho: float) -> np.ndarray:
    """``m * exp(v_i / rho) / sum_j exp(v_j / rho)``, overflow-safe."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("need a non-empty 1-D list of values")
    if not np.all(np.isfinite(v)):
        raise ValueError("weight inputs must be finite")
    if not rho > 0:
        raise ValueError(f"temperature must be > 0, got {rho}")
    e = np.exp((v - v.max()) / rho)
    return v.size * e / e.sum()


def _minmax(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def mix_values(metrics: PopulationMetrics, normalize: bool) -> np.ndarray:
    if normalize:
        return _minmax(metrics.novelty) * _minmax(metrics.quality)
    return np.asarray(metrics.novelty) * np.asarray(metrics.quality)


def compute_weights(metrics: PopulationMetrics, config: WeightingConfig, rho: float) -> np.ndarray:
    metric = config.metric
    if metric is Metric.UNIFORM:
        return np.ones(metrics.m)
    if metric is Metric.MIX:
        values = mix_values(metrics, config.normalize_metrics)
    else:
        raw = metrics.novelty if metric is Metric.NOVELTY else metrics.quality
        values = _minmax(raw) if config.normalize_metrics else np.asarray(raw)
    return softmax_weights(values, rho)


def anneal(rho: float, delta_rho: float) -> float:
    return rho + delta_rho


def weight_entropy(weights: np.ndarray) -> float:
    """Shannon entropy (nats) of ``weights / m``; equals ``log m`` when uniform."""
    p = np.asarray(weights, dtype=np.float64)
    p = p / p.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
