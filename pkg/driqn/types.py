"""Domain value types shared across the simulator, learners and harness."""
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np


class DriqnError(Exception):
    """Base error for the package. Subclasses carry extra context attributes."""
    def __init__(self, message: str):
        super().__init__(message)


class ContractViolation(DriqnError):
    """A caller broke an operation's precondition."""
    def __init__(self, message: str, operation: str = ""):
        super().__init__(f"{operation}: {message}" if operation else message)
        self.operation = operation


class ConfigError(DriqnError):
    """Invalid run configuration."""
    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


# ============================================================
# Simulator values
# ============================================================

class Outcome(Enum):
    RUNNING = "running"
    COLLISION = "collision"
    GOAL_REACHED = "goal"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.RUNNING


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class VesselState:
    position: tuple[float, float]
    heading: float
    speed: float
    step_count: int = 0

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position, dtype=np.float64)


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class Vortex:
    center: tuple[float, float]
    circulation: float
    core_radius: float


@dataclass(frozen=True)
class WorldMap:
    """Static geometry of one environment. Bounds are (xmin, ymin, xmax, ymax)."""
    bounds: tuple[float, float, float, float]
    obstacles: tuple[Obstacle, ...]
    vortices: tuple[Vortex, ...]
    goal: tuple[float, float]
    start: tuple[float, float]

    @property
    def diagonal(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return math.hypot(xmax - xmin, ymax - ymin)

    def max_flow_speed(self) -> float:
        """Upper bound on |flow| anywhere: every Rankine vortex peaks at its core edge."""
        return sum(abs(v.circulation) / (2.0 * math.pi * v.core_radius) for v in self.vortices)


@dataclass(frozen=True)
class Observation:
    """velocity and goal_rel are 2-vectors; lidar holds B normalized ranges."""
    velocity: np.ndarray
    goal_rel: np.ndarray
    lidar: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.goal_rel, self.lidar])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> Observation:
        vec = np.asarray(vec, dtype=np.float64)
        return cls(velocity=vec[0:2].copy(), goal_rel=vec[2:4].copy(), lidar=vec[4:].copy())

    @property
    def n_beams(self) -> int:
        return int(self.lidar.shape[0])


ACCELERATIONS: tuple[float, ...] = (-0.4, 0.0, 0.4)
TURN_RATES: tuple[float, ...] = (-0.52, 0.0, 0.52)
N_ACTIONS = len(ACCELERATIONS) * len(TURN_RATES)


@dataclass(frozen=True)
class ActionCommand:
    index: int

    def __post_init__(self):
        if not 0 <= self.index < N_ACTIONS:
            raise ContractViolation(f"action index {self.index} outside [0, {N_ACTIONS})",
                                    operation="ActionCommand")

    @property
    def accel(self) -> float:
        return ACCELERATIONS[self.index // len(TURN_RATES)]

    @property
    def turn_rate(self) -> float:
        return TURN_RATES[self.index % len(TURN_RATES)]

    @classmethod
    def from_controls(cls, accel: float, turn_rate: float) -> ActionCommand:
        row = ACCELERATIONS.index(accel)
        col = TURN_RATES.index(turn_rate)
        return cls(len(TURN_RATES) * row + col)


@dataclass(frozen=True)
class StepResult:
    next_state: VesselState
    reward: float
    outcome: Outcome


# ============================================================
# Noise and learning values
# ============================================================

class NoiseKind(Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    SALT_PEPPER = "salt_pepper"
    OCCLUSION = "occlusion"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    intensity: float
    subgroup_id: int

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ContractViolation(f"noise intensity {self.intensity} outside [0, 1]",
                                    operation="NoiseSpec")
        if self.subgroup_id < 0:
            raise ContractViolation("subgroup_id must be non-negative", operation="NoiseSpec")


@dataclass
class Transition:
    obs: Observation
    action: int
    reward: float
    next_obs: Observation
    done: bool
    subgroup_id: int


class DistortionKind(Enum):
    IDENTITY = "identity"
    CVAR = "cvar"


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind = DistortionKind.IDENTITY
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ContractViolation(f"eta {self.eta} outside (0, 1]", operation="DistortionSpec")


GREEDY = DistortionSpec()


@dataclass
class Batch:
    """A mini-batch of encoded transitions. Arrays share the leading dimension."""
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    subgroup_id: int = -1
    sequence: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    @classmethod
    def concat(cls, batches: list[Batch]) -> Batch:
        if len(batches) == 1:
            return batches[0]
        return cls(
            obs=np.concatenate([b.obs for b in batches]),
            actions=np.concatenate([b.actions for b in batches]),
            rewards=np.concatenate([b.rewards for b in batches]),
            next_obs=np.concatenate([b.next_obs for b in batches]),
            dones=np.concatenate([b.dones for b in batches]),
            subgroup_id=-1,
            sequence=np.concatenate([b.sequence for b in batches]),
        )
