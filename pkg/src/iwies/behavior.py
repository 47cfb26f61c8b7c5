"""Behavior characterizations and their distances.

Navigation policies are described by the trace of visited (x, y) positions;
1-D progress tasks (locomotion-style) by the x offset from the initial
coordinate. Episodes that stop early are padded with their final entry so every
characterization has exactly ``H`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .environments import EpisodeTrace


class BcKind(str, Enum):
    POINT_TRACE = "PointTrace"
    OFFSET_TRACE = "OffsetTrace"


@dataclass(frozen=True)
class BehaviorCharacterization:
    kind: BcKind
    values: np.ndarray  # (H, 2) for point traces, (H,) for offset traces

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        expected_ndim = 2 if self.kind is BcKind.POINT_TRACE else 1
        if values.ndim != expected_ndim or len(values) == 0:
            raise ValueError(f"bad {self.kind.value} shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("behavior characterization has non-finite entries")

    @property
    def H(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BehaviorCharacterization):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def _pad(rows: np.ndarray, H: int) -> np.ndarray:
    if len(rows) >= H:
        return rows[:H]
    pad = np.repeat(rows[-1:], H - len(rows), axis=0)
    return np.concatenate([rows, pad], axis=0)


def bc_nav(trace: EpisodeTrace, H: int) -> BehaviorCharacterization:
    """The ``H`` post-step positions, padded with the last one."""
    states = np.asarray(trace.states, dtype=np.float64)
    if len(states) == 0:
        raise ValueError("empty trace")
    # A zero-step episode (started on the goal) never left the start.
    visited = states[1:] if len(states) > 1 else states
    return BehaviorCharacterization(BcKind.POINT_TRACE, _pad(visited, H))


def bc_offsets(x_positions, H: int) -> BehaviorCharacterization:
    """Offsets ``x[i] - x[0]`` for ``i = 1..H``; ``x[0]`` is the initial coordinate."""
    x = np.asarray(x_positions, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty position list")
    offsets = x[1:] - x[0] if x.size > 1 else np.zeros(1)
    return BehaviorCharacterization(BcKind.OFFSET_TRACE, _pad(offsets, H))


def _check_pair(a: BehaviorCharacterization, b: BehaviorCharacterization, kind: BcKind) -> None:
    if a.kind is not kind or b.kind is not kind:
        raise ValueError(f"expected two {kind.value}s, got {a.kind.value} and {b.kind.value}")
    if a.values.shape != b.values.shape:
        raise ValueError(f"length mismatch: {a.values.shape} vs {b.values.shape}")


def distance_nav(a: BehaviorCharacterization, b: BehaviorCharacterization) -> float:
    """Mean Euclidean distance between corresponding trace points."""
    _check_pair(a, b, BcKind.POINT_TRACE)
    d = a.values - b.values
    return float(np.mean(np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])))


def distance_offsets(a: BehaviorCharacterization, b: BehaviorCharacterization) -> float:
    """Mean absolute difference between corresponding offsets."""
    _check_pair(a, b, BcKind.OFFSET_TRACE)
    return float(np.mean(np.abs(a.values - b.values)))


def distance(a: BehaviorCharacterization, b: BehaviorCharacterization) -> float:
    """Dispatch to the distance matching the characterization kind."""
    if a.kind is not b.kind:
        raise ValueError(f"cannot compare {a.kind.value} with {b.kind.value}")
    if a.kind is BcKind.POINT_TRACE:
        return distance_nav(a, b)
    return distance_offsets(a, b)
