"""Flat-parameter MLP policy.

All weights and biases live in one float64 vector so that ES perturbation and
update are plain vector arithmetic. Layout, per layer in order: the weight
matrix of shape ``(fan_out, fan_in)`` flattened row-major, then the bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden: tuple[int, ...] = (128, 128)
    output_dim: int = 2
    action_clip: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"layer sizes must be positive, got {dims}")
        if not self.action_clip > 0:
            raise ValueError(f"action_clip must be > 0, got {self.action_clip}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) for each linear layer."""
        dims = self.layer_dims
        return [(dims[k + 1], dims[k]) for k in range(len(dims) - 1)]


def param_count(arch: MlpArchitecture) -> int:
    return sum((fan_in + 1) * fan_out for fan_out, fan_in in arch.layer_shapes())


def unflatten(arch: MlpArchitecture, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split ``theta`` into ``(W, b)`` views per layer (no copies)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != param_count(arch):
        raise ValueError(
            f"parameter vector has shape {theta.shape}, expected ({param_count(arch)},)"
        )
    layers = []
    offset = 0
    for fan_out, fan_in in arch.layer_shapes():
        w = theta[offset:offset + fan_out * fan_in].reshape(fan_out, fan_in)
        offset += fan_out * fan_in
        b = theta[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_random(arch: MlpArchitecture, seed: int | Sequence[int]) -> np.ndarray:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(param_count(arch), dtype=np.float64)
    for w, _ in unflatten(arch, theta):
        fan_out, fan_in = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return theta


@dataclass
class Policy:
    """A compiled view of (arch, theta) for repeated forward passes."""

    arch: MlpArchitecture
    theta: np.ndarray
    _layers: list = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._layers = unflatten(self.arch, self.theta)

    def __call__(self, state) -> np.ndarray:
        x = np.asarray(state, dtype=np.float64)
        if x.shape != (self.arch.input_dim,):
            raise ValueError(
                f"state has shape {x.shape}, expected ({self.arch.input_dim},)"
            )
        last = len(self._layers) - 1
        for k, (w, b) in enumerate(self._layers):
            x = w @ x + b
            if k < last:
                np.maximum(x, 0.0, out=x)
        clip = self.arch.action_clip
        return np.clip(x, -clip, clip)


def forward(arch: MlpArchitecture, theta: np.ndarray, state) -> np.ndarray:
    return Policy(arch, theta)(state)


def perturb(theta: np.ndarray, eps: np.ndarray, sigma: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if theta.shape != eps.shape:
        raise ValueError(f"length mismatch: theta {theta.shape} vs eps {eps.shape}")
    return theta + sigma * eps
