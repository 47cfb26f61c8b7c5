"""Plain-text parameter checkpoints.

Format::

    iwies-theta v1 <input_dim> <hidden,dims or -> <output_dim> <clip>
    <one value per line, in flat-vector order>

Values use Python's shortest round-trip ``repr`` so a write/load cycle is
bit-exact.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .policy_net import MlpArchitecture, param_count

MAGIC = "iwies-theta"
VERSION = "v1"


class CheckpointError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class CheckpointShapeError(CheckpointError):
    pass


def format_header(arch: MlpArchitecture) -> str:
    hidden = ",".join(str(h) for h in arch.hidden) or "-"
    return f"{MAGIC} {VERSION} {arch.input_dim} {hidden} {arch.output_dim} {arch.action_clip!r}"


def write_checkpoint(theta: np.ndarray, arch: MlpArchitecture, path) -> Path:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (param_count(arch),):
        raise ValueError(f"theta has shape {theta.shape}, architecture needs ({param_count(arch)},)")
    path = Path(path)
    lines = [format_header(arch)]
    lines.extend(repr(v) for v in theta.tolist())
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_header(path, text: str) -> MlpArchitecture:
    parts = text.split()
    if len(parts) != 6 or parts[0] != MAGIC:
        raise CheckpointError(path, 1, f"not an {MAGIC} header: {text!r}")
    if parts[1] != VERSION:
        raise CheckpointError(path, 1, f"unsupported version {parts[1]!r}")
    try:
        hidden = () if parts[3] == "-" else tuple(int(h) for h in parts[3].split(","))
        return MlpArchitecture(int(parts[2]), hidden, int(parts[4]), float(parts[5]))
    except ValueError as exc:
        raise CheckpointError(path, 1, f"bad architecture: {exc}") from None


def load_checkpoint(path) -> tuple[np.ndarray, MlpArchitecture]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise CheckpointError(path, 1, "empty file")
    arch = _parse_header(path, lines[0])
    values = []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            v = float(text)
        except ValueError:
            raise CheckpointError(path, lineno, f"not a number: {text!r}") from None
        if not math.isfinite(v):
            raise CheckpointError(path, lineno, f"non-finite value {text!r}")
        values.append(v)
    expected = param_count(arch)
    if len(values) != expected:
        raise CheckpointShapeError(
            path, len(lines), f"header declares {expected} parameters, file holds {len(values)}"
        )
    return np.array(values, dtype=np.float64), arch
