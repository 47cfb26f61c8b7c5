"""Closed-form fitness functions for checking the ES machinery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .behavior import BcKind, BehaviorCharacterization


@dataclass(frozen=True)
class QuadraticTask:
    """``f(z) = -||z - optimum||^2``; behavior is the raw parameter vector.

    The Gaussian-smoothed objective has gradient ``-2 (theta - optimum)``
    at every ``sigma``.
    """

    optimum: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "optimum", tuple(float(v) for v in self.optimum))

    @property
    def dim(self) -> int:
        return len(self.optimum)

    def fitness(self, z: np.ndarray) -> float:
        diff = np.asarray(z, dtype=np.float64) - np.asarray(self.optimum)
        return -float(diff @ diff)

    def smoothed_gradient(self, theta: np.ndarray) -> np.ndarray:
        return -2.0 * (np.asarray(theta, dtype=np.float64) - np.asarray(self.optimum))

    def evaluate(self, z: np.ndarray, want_bc: bool):
        bc = BehaviorCharacterization(BcKind.OFFSET_TRACE, np.array(z)) if want_bc else None
        return self.fitness(z), bc
