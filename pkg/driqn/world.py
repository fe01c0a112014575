"""2-D marine environment: unicycle vessel in vortex flow, circular obstacles, LiDAR.

All operations are pure functions of their inputs plus a caller-owned RNG.
"""
from __future__ import annotations
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from .types import (
    ActionCommand, DriqnError, Obstacle, Observation, Outcome, StepResult,
    VesselState, Vortex, WorldMap, wrap_angle,
)

log = logging.getLogger(__name__)


class LayoutError(DriqnError):
    """Rejection sampling could not place a valid layout."""
    def __init__(self, seed: int, attempts: int):
        super().__init__(f"no feasible layout for seed {seed} after {attempts} attempts")
        self.seed = seed
        self.attempts = attempts


@dataclass(frozen=True)
class WorldParams:
    dt: float = 0.1
    v_max: float = 2.0
    vessel_radius: float = 0.3
    goal_radius: float = 0.5
    d_sense: float = 10.0
    n_beams: int = 64
    width: float = 50.0
    height: float = 50.0
    t_max: int = 1000
    n_obstacles: int = 6
    n_vortices: int = 4
    obstacle_radius: tuple[float, float] = (1.0, 3.0)
    circulation: tuple[float, float] = (4.0, 8.0)
    core_radius: tuple[float, float] = (1.5, 3.0)
    min_start_goal: float = 15.0
    layout_attempts: int = 1000
    r_step: float = -1.0
    r_collision: float = -50.0
    r_goal: float = 100.0
    alpha: float = 1.0


DEFAULT_WORLD = WorldParams()


# ============================================================
# Flow field
# ============================================================

def flow_velocity(world: WorldMap, p: np.ndarray) -> np.ndarray:
    """Superposed Rankine vortices, counterclockwise for positive circulation."""
    p = np.asarray(p, dtype=np.float64)
    total = np.zeros(2)
    for vortex in world.vortices:
        rel = p - np.asarray(vortex.center)
        r = math.hypot(rel[0], rel[1])
        if r == 0.0:
            continue
        if r < vortex.core_radius:
            speed = vortex.circulation * r / (2.0 * math.pi * vortex.core_radius ** 2)
        else:
            speed = vortex.circulation / (2.0 * math.pi * r)
        total += speed * np.array([-rel[1], rel[0]]) / r
    return total


# ============================================================
# Dynamics and reward
# ============================================================

def compose_reward(d_prev: float, d_new: float, outcome: Outcome,
                   params: WorldParams = DEFAULT_WORLD) -> float:
    reward = params.r_step + params.alpha * (d_prev - d_new)
    if outcome is Outcome.COLLISION:
        reward += params.r_collision
    elif outcome is Outcome.GOAL_REACHED:
        reward += params.r_goal
    return reward


def _collides(position: np.ndarray, world: WorldMap, vessel_radius: float) -> bool:
    for obstacle in world.obstacles:
        dx = position[0] - obstacle.center[0]
        dy = position[1] - obstacle.center[1]
        if math.hypot(dx, dy) < obstacle.radius + vessel_radius:
            return True
    return False


def step(state: VesselState, cmd: ActionCommand, world: WorldMap, dt: float,
         params: WorldParams = DEFAULT_WORLD) -> StepResult:
    """Forward-Euler step. Outcome precedence: collision, goal, timeout."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    pos = state.xy
    goal = np.asarray(world.goal)
    heading_vec = np.array([math.cos(state.heading), math.sin(state.heading)])
    new_pos = pos + (state.speed * heading_vec + flow_velocity(world, pos)) * dt
    new_speed = min(max(state.speed + cmd.accel * dt, 0.0), params.v_max)
    new_heading = wrap_angle(state.heading + cmd.turn_rate * dt)
    new_state = VesselState(
        position=(float(new_pos[0]), float(new_pos[1])),
        heading=new_heading,
        speed=new_speed,
        step_count=state.step_count + 1,
    )

    d_prev = float(np.linalg.norm(pos - goal))
    d_new = float(np.linalg.norm(new_pos - goal))
    if _collides(new_pos, world, params.vessel_radius):
        outcome = Outcome.COLLISION
    elif d_new < params.goal_radius:
        outcome = Outcome.GOAL_REACHED
    elif state.step_count + 1 >= params.t_max:
        outcome = Outcome.TIMEOUT
    else:
        outcome = Outcome.RUNNING
    return StepResult(new_state, compose_reward(d_prev, d_new, outcome, params), outcome)


# ============================================================
# Sensing
# ============================================================

def beam_bearings(n_beams: int) -> np.ndarray:
    """Beam angles relative to the heading."""
    return 2.0 * np.pi * np.arange(n_beams) / n_beams


def raycast(origin: np.ndarray, angles: np.ndarray, obstacles: Iterable[Obstacle],
            max_range: float) -> np.ndarray:
    """Distance along each ray to the first obstacle surface, clamped to max_range."""
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    ranges = np.full(angles.shape[0], max_range)
    for obstacle in obstacles:
        f = origin - np.asarray(obstacle.center)
        c = float(f @ f) - obstacle.radius ** 2
        if c <= 0.0:
            return np.zeros(angles.shape[0])  # origin inside an obstacle
        b = dirs @ f
        disc = b * b - c
        hit = disc >= 0.0
        t = np.full(angles.shape[0], np.inf)
        t[hit] = -b[hit] - np.sqrt(disc[hit])
        t[t < 0.0] = np.inf
        ranges = np.minimum(ranges, t)
    return ranges


def sense(state: VesselState, world: WorldMap,
          params: WorldParams = DEFAULT_WORLD) -> Observation:
    pos = state.xy
    angles = state.heading + beam_bearings(params.n_beams)
    ranges = raycast(pos, angles, world.obstacles, params.d_sense)
    lidar = np.clip(ranges / params.d_sense, 0.0, 1.0)

    c, s = math.cos(state.heading), math.sin(state.heading)
    to_goal = np.asarray(world.goal) - pos
    goal_rel = np.array([c * to_goal[0] + s * to_goal[1], -s * to_goal[0] + c * to_goal[1]])
    velocity = state.speed * np.array([c, s]) + flow_velocity(world, pos)
    return Observation(velocity=velocity, goal_rel=goal_rel, lidar=lidar)


def encode_observation(obs: Observation, params: WorldParams = DEFAULT_WORLD) -> np.ndarray:
    """Network input: velocity in units of v_max, goal in units of half the arena diagonal."""
    half_diag = 0.5 * math.hypot(params.width, params.height)
    return np.concatenate([obs.velocity / params.v_max, obs.goal_rel / half_diag, obs.lidar])


def observation_dim(params: WorldParams = DEFAULT_WORLD) -> int:
    return 4 + params.n_beams


# ============================================================
# Layouts
# ============================================================

def canonical_map(params: WorldParams = DEFAULT_WORLD) -> WorldMap:
    """Hand-authored layout: 4 vortices and 6 obstacles scattered between the corners."""
    sx, sy = params.width / 50.0, params.height / 50.0
    obstacles = (
        Obstacle((15.0 * sx, 12.0 * sy), 2.5),
        Obstacle((24.0 * sx, 26.0 * sy), 3.0),
        Obstacle((12.0 * sx, 33.0 * sy), 2.0),
        Obstacle((36.0 * sx, 17.0 * sy), 2.0),
        Obstacle((33.0 * sx, 37.0 * sy), 2.5),
        Obstacle((42.0 * sx, 28.0 * sy), 1.5),
    )
    vortices = (
        Vortex((20.0 * sx, 20.0 * sy), 6.0, 2.5),
        Vortex((30.0 * sx, 30.0 * sy), -6.0, 2.5),
        Vortex((10.0 * sx, 42.0 * sy), 5.0, 2.0),
        Vortex((40.0 * sx, 8.0 * sy), -5.0, 2.0),
    )
    return WorldMap(
        bounds=(0.0, 0.0, params.width, params.height),
        obstacles=obstacles,
        vortices=vortices,
        goal=(45.0 * sx, 45.0 * sy),
        start=(5.0 * sx, 5.0 * sy),
    )


def _clearance_ok(point: np.ndarray, obstacles: tuple[Obstacle, ...], clearance: float) -> bool:
    return all(np.linalg.norm(point - np.asarray(o.center)) >= clearance for o in obstacles)


def _sample_layout(rng: np.random.Generator, params: WorldParams) -> WorldMap | None:
    lo_r, hi_r = params.obstacle_radius
    obstacles = []
    for _ in range(params.n_obstacles):
        radius = float(rng.uniform(lo_r, hi_r))
        center = rng.uniform([radius, radius], [params.width - radius, params.height - radius])
        obstacles.append(Obstacle((float(center[0]), float(center[1])), radius))
    vortices = []
    for _ in range(params.n_vortices):
        center = rng.uniform([0.0, 0.0], [params.width, params.height])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        vortices.append(Vortex(
            (float(center[0]), float(center[1])),
            sign * float(rng.uniform(*params.circulation)),
            float(rng.uniform(*params.core_radius)),
        ))
    obstacles_t = tuple(obstacles)
    clearance = params.goal_radius + max((o.radius for o in obstacles_t), default=0.0)
    margin = params.goal_radius
    low, high = [margin, margin], [params.width - margin, params.height - margin]
    start = rng.uniform(low, high)
    goal = rng.uniform(low, high)
    if np.linalg.norm(goal - start) < params.min_start_goal:
        return None
    if not (_clearance_ok(start, obstacles_t, clearance) and _clearance_ok(goal, obstacles_t, clearance)):
        return None
    return WorldMap(
        bounds=(0.0, 0.0, params.width, params.height),
        obstacles=obstacles_t,
        vortices=tuple(vortices),
        goal=(float(goal[0]), float(goal[1])),
        start=(float(start[0]), float(start[1])),
    )


def initial_state(world: WorldMap) -> VesselState:
    """At rest on the start point, pointed at the goal."""
    dx = world.goal[0] - world.start[0]
    dy = world.goal[1] - world.start[1]
    return VesselState(position=world.start, heading=wrap_angle(math.atan2(dy, dx)), speed=0.0)


def reset(seed: int, randomize_layout: bool,
          params: WorldParams = DEFAULT_WORLD) -> tuple[VesselState, WorldMap]:
    if not randomize_layout:
        world = canonical_map(params)
        return initial_state(world), world
    rng = np.random.default_rng(seed)
    for _ in range(params.layout_attempts):
        world = _sample_layout(rng, params)
        if world is not None:
            return initial_state(world), world
    raise LayoutError(seed, params.layout_attempts)


# ============================================================
# Documents
# ============================================================

def layout_to_document(world: WorldMap) -> dict:
    return {
        "bounds": list(world.bounds),
        "obstacles": [{"center": list(o.center), "radius": o.radius} for o in world.obstacles],
        "vortices": [
            {"center": list(v.center), "circulation": v.circulation, "core_radius": v.core_radius}
            for v in world.vortices
        ],
        "goal": list(world.goal),
        "start": list(world.start),
    }


def layout_from_document(doc: dict) -> WorldMap:
    try:
        return WorldMap(
            bounds=tuple(float(x) for x in doc["bounds"]),
            obstacles=tuple(Obstacle(tuple(map(float, o["center"])), float(o["radius"]))
                            for o in doc["obstacles"]),
            vortices=tuple(Vortex(tuple(map(float, v["center"])), float(v["circulation"]),
                                  float(v["core_radius"])) for v in doc["vortices"]),
            goal=tuple(map(float, doc["goal"])),
            start=tuple(map(float, doc["start"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DriqnError(f"malformed layout document: {exc}") from exc


def save_layout(world: WorldMap, path: str | Path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(layout_to_document(world), f, sort_keys=False)


def load_layout(path: str | Path) -> WorldMap:
    with open(path) as f:
        return layout_from_document(yaml.safe_load(f))


TRAJECTORY_COLUMNS = ("t", "x", "y", "psi", "v", "reward", "outcome")


def write_trajectory(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRAJECTORY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_trajectory(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row = {k: float(raw[k]) for k in ("t", "x", "y", "psi", "v", "reward")}
            row["outcome"] = raw["outcome"]
            rows.append(row)
    return rows
