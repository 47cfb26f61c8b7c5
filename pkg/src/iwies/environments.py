"""2D point-navigation tasks: goal change, moving obstacle, puddle world.

The arena is the square [-0.5, 0.5]^2. An agent whose candidate position lands
inside an obstacle or puddle bounces back to where it was.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .policy_net import MlpArchitecture, Policy

ARENA_HALF = 0.5
OBSTACLE_HALF = 0.3
PUDDLE_RADII = (0.08, 0.12, 0.16)
MAX_SAMPLING_ATTEMPTS = 10_000

Point = tuple[float, float]


class SamplingError(RuntimeError):
    pass


class Variant(str, Enum):
    GOAL = "GoalNav"
    OBSTACLE = "ObstacleNav"
    PUDDLE = "PuddleNav"


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle used to sample goals or obstacle centres."""

    xmin: float = -ARENA_HALF
    xmax: float = ARENA_HALF
    ymin: float = -ARENA_HALF
    ymax: float = ARENA_HALF

    def __post_init__(self) -> None:
        if not (self.xmin <= self.xmax and self.ymin <= self.ymax):
            raise ValueError(f"empty region {self}")
        if min(self.xmin, self.ymin) < -ARENA_HALF or max(self.xmax, self.ymax) > ARENA_HALF:
            raise ValueError(f"region {self} is not inside the arena")

    @classmethod
    def parse(cls, text: str) -> "Region":
        xmin, xmax, ymin, ymax = (float(v) for v in text.split(","))
        return cls(xmin, xmax, ymin, ymax)

    def format(self) -> str:
        return ",".join(repr(v) for v in (self.xmin, self.xmax, self.ymin, self.ymax))


FULL_ARENA = Region()
FIRST_QUADRANT = Region(0.0, ARENA_HALF, 0.0, ARENA_HALF)
THIRD_QUADRANT = Region(-ARENA_HALF, 0.0, -ARENA_HALF, 0.0)

# Canonical start/goal layouts for the three navigation families.
CASE1_START: Point = (0.0, 0.0)
CASE2_START: Point = (0.0, -0.5)
CASE2_GOAL: Point = (0.0, 0.5)
PUDDLE_START: Point = (0.0, 0.0)


@dataclass(frozen=True)
class TaskSpec:
    variant: Variant
    start: Point
    goal: Point
    obstacle_center: Point | None = None
    puddles: tuple[tuple[Point, float], ...] | None = None
    horizon: int = 100
    goal_tolerance: float = 0.01
    control_cost_coeff: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "start", _point(self.start))
        object.__setattr__(self, "goal", _point(self.goal))
        if self.obstacle_center is not None:
            object.__setattr__(self, "obstacle_center", _point(self.obstacle_center))
        if self.puddles is not None:
            object.__setattr__(
                self, "puddles", tuple((_point(c), float(r)) for c, r in self.puddles)
            )
        for name in ("start", "goal"):
            if not _in_arena(getattr(self, name)):
                raise ValueError(f"{name} {getattr(self, name)} outside the arena")
        if self.horizon < 1 or not self.goal_tolerance > 0 or self.control_cost_coeff < 0:
            raise ValueError("invalid horizon, goal_tolerance or control_cost_coeff")
        if self.variant is Variant.OBSTACLE and self.obstacle_center is None:
            raise ValueError("ObstacleNav requires obstacle_center")
        if self.variant is Variant.PUDDLE:
            if self.puddles is None or len(self.puddles) != 3:
                raise ValueError("PuddleNav requires exactly 3 puddles")
            if len({r for _, r in self.puddles}) != 3:
                raise ValueError("puddle radii must be pairwise distinct")
            if self.blocked(self.start) or self.blocked(self.goal):
                raise ValueError("a puddle covers the start or the goal")

    def blocked(self, p: Point) -> bool:
        """True if ``p`` lies inside the obstacle square or any puddle disc."""
        x, y = p
        if self.obstacle_center is not None:
            cx, cy = self.obstacle_center
            if abs(x - cx) <= OBSTACLE_HALF and abs(y - cy) <= OBSTACLE_HALF:
                return True
        if self.puddles is not None:
            for (px, py), r in self.puddles:
                if math.hypot(x - px, y - py) <= r:
                    return True
        return False

    def to_record(self) -> str:
        parts = [
            self.variant.value,
            f"start={_fmt_point(self.start)}",
            f"goal={_fmt_point(self.goal)}",
            "obstacle=" + ("-" if self.obstacle_center is None else _fmt_point(self.obstacle_center)),
            "puddles=" + (
                "-" if self.puddles is None
                else ";".join(f"{_fmt_point(c)},{r!r}" for c, r in self.puddles)
            ),
            f"horizon={self.horizon}",
            f"tol={self.goal_tolerance!r}",
            f"cc={self.control_cost_coeff!r}",
        ]
        return " ".join(parts)

    @classmethod
    def from_record(cls, line: str) -> "TaskSpec":
        tag, *fields_ = line.split()
        kv = dict(f.split("=", 1) for f in fields_)
        puddles = None
        if kv["puddles"] != "-":
            puddles = []
            for chunk in kv["puddles"].split(";"):
                x, y, r = (float(v) for v in chunk.split(","))
                puddles.append(((x, y), r))
        return cls(
            variant=Variant(tag),
            start=_parse_point(kv["start"]),
            goal=_parse_point(kv["goal"]),
            obstacle_center=None if kv["obstacle"] == "-" else _parse_point(kv["obstacle"]),
            puddles=None if puddles is None else tuple(puddles),
            horizon=int(kv["horizon"]),
            goal_tolerance=float(kv["tol"]),
            control_cost_coeff=float(kv["cc"]),
        )


@dataclass(frozen=True)
class StepResult:
    next_state: Point
    reward: float
    done: bool


@dataclass
class EpisodeTrace:
    states: np.ndarray  # (k + 1, 2), states[0] is the start
    actions: np.ndarray  # (k, 2)
    rewards: np.ndarray  # (k,)
    episode_return: float = field(default=0.0)

    @property
    def length(self) -> int:
        return len(self.rewards)


def _point(p) -> Point:
    x, y = p
    return (float(x), float(y))


def _fmt_point(p: Point) -> str:
    return f"{p[0]!r},{p[1]!r}"


def _parse_point(text: str) -> Point:
    x, y = text.split(",")
    return (float(x), float(y))


def _in_arena(p: Point) -> bool:
    return abs(p[0]) <= ARENA_HALF and abs(p[1]) <= ARENA_HALF


def _clip_arena(v: float) -> float:
    return -ARENA_HALF if v < -ARENA_HALF else ARENA_HALF if v > ARENA_HALF else v


def reset(task: TaskSpec) -> Point:
    return task.start


def _transition(task: TaskSpec, x: float, y: float, ax: float, ay: float):
    nx = _clip_arena(x + ax)
    ny = _clip_arena(y + ay)
    if task.blocked((nx, ny)):
        nx, ny = x, y
    gx, gy = task.goal
    dx, dy = nx - gx, ny - gy
    dist2 = dx * dx + dy * dy
    reward = -dist2 - task.control_cost_coeff * (ax * ax + ay * ay)
    done = math.sqrt(dist2) <= task.goal_tolerance
    return nx, ny, reward, done


def step(task: TaskSpec, state, action) -> StepResult:
    x, y = _point(state)
    ax, ay = _point(action)
    if not (math.isfinite(ax) and math.isfinite(ay)):
        raise ValueError(f"non-finite action {action!r}")
    nx, ny, reward, done = _transition(task, x, y, ax, ay)
    return StepResult((nx, ny), reward, done)


def rollout(task: TaskSpec, arch: MlpArchitecture, theta: np.ndarray) -> EpisodeTrace:
    """Run one episode of the deterministic policy ``theta`` on ``task``."""
    if arch.input_dim != 2 or arch.output_dim != 2:
        raise ValueError("navigation policies need input_dim = output_dim = 2")
    policy = Policy(arch, theta)
    x, y = reset(task)
    gx, gy = task.goal
    states = [(x, y)]
    actions = []
    rewards = []
    if math.hypot(x - gx, y - gy) > task.goal_tolerance:
        state = np.array([x, y])
        for _ in range(task.horizon):
            state[0] = x
            state[1] = y
            ax, ay = policy(state).tolist()
            if not (math.isfinite(ax) and math.isfinite(ay)):
                raise ValueError(f"policy produced non-finite action ({ax}, {ay})")
            x, y, reward, done = _transition(task, x, y, ax, ay)
            states.append((x, y))
            actions.append((ax, ay))
            rewards.append(reward)
            if done:
                break
    episode_return = 0.0
    for r in rewards:
        episode_return += r
    return EpisodeTrace(
        states=np.array(states, dtype=np.float64),
        actions=np.array(actions, dtype=np.float64).reshape(-1, 2),
        rewards=np.array(rewards, dtype=np.float64),
        episode_return=episode_return,
    )


def sample_task(
    kind: Variant | str,
    rng_seed: int,
    region: Region = FULL_ARENA,
    *,
    horizon: int = 100,
    goal_tolerance: float = 0.01,
    control_cost_coeff: float = 0.05,
) -> TaskSpec:
    """Draw a task of the given family; identical seeds give identical tasks.

    ``region`` bounds the goal for GoalNav/PuddleNav and the obstacle centre
    for ObstacleNav.
    """
    kind = Variant(kind)
    rng = np.random.default_rng(rng_seed)
    common = dict(horizon=horizon, goal_tolerance=goal_tolerance,
                  control_cost_coeff=control_cost_coeff)

    def uniform(reg: Region) -> Point:
        return (float(rng.uniform(reg.xmin, reg.xmax)), float(rng.uniform(reg.ymin, reg.ymax)))

    if kind is Variant.GOAL:
        return TaskSpec(kind, CASE1_START, uniform(region), **common)

    if kind is Variant.OBSTACLE:
        lim = ARENA_HALF - OBSTACLE_HALF
        reg = Region(max(region.xmin, -lim), min(region.xmax, lim),
                     max(region.ymin, -lim), min(region.ymax, lim))
        for _ in range(MAX_SAMPLING_ATTEMPTS):
            centre = uniform(reg)
            task = TaskSpec(kind, CASE2_START, CASE2_GOAL, obstacle_center=centre, **common)
            if not (task.blocked(task.start) or task.blocked(task.goal)):
                return task
        raise SamplingError(f"no obstacle placement found in {MAX_SAMPLING_ATTEMPTS} attempts")

    goal = uniform(region)
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        puddles = []
        for r in PUDDLE_RADII:
            puddles.append((uniform(FULL_ARENA), r))
        ok = all(
            math.hypot(p[0] - c[0], p[1] - c[1]) > r
            for c, r in puddles for p in (PUDDLE_START, goal)
        )
        if ok:
            return TaskSpec(kind, PUDDLE_START, goal, puddles=tuple(puddles), **common)
    raise SamplingError(f"no puddle layout found in {MAX_SAMPLING_ATTEMPTS} attempts")
