"""Classical reactive planners on the (noisy) observation interface:
Artificial Potential Field and a Bug2-style boundary follower.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .types import ACCELERATIONS, ActionCommand, Observation, TURN_RATES
from .world import DEFAULT_WORLD, WorldParams, beam_bearings

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineConfig:
    k_att: float = 1.0
    k_rep: float = 0.5
    r0_fraction: float = 0.5
    align_tolerance: float = math.pi / 6
    d_trigger: float = 0.15        # fraction of d_sense
    keep_near: float = 0.15
    keep_far: float = 0.25
    front_clear: float = 0.2
    leave_clear: float = 0.5
    leave_cone: float = math.pi / 8
    cruise_speed: float = 1.0
    follow_speed: float = 0.6


DEFAULT_BASELINE = BaselineConfig()


def _wrapped_bearings(n_beams: int) -> np.ndarray:
    b = beam_bearings(n_beams)
    return np.where(b > math.pi, b - 2.0 * math.pi, b)


def steer(error: float, dt: float) -> float:
    """Discrete turn rate whose one-step heading change best cancels error."""
    return min(TURN_RATES, key=lambda w: abs(error - w * dt))


# ============================================================
# Artificial Potential Field
# ============================================================

def apf_force(obs: Observation, params: WorldParams = DEFAULT_WORLD,
              cfg: BaselineConfig = DEFAULT_BASELINE) -> np.ndarray:
    """Attraction to the goal plus beam-wise repulsion, in the vessel frame."""
    force = np.zeros(2)
    goal_dist = float(np.linalg.norm(obs.goal_rel))
    if goal_dist > 0.0:
        force += cfg.k_att * obs.goal_rel / goal_dist
    r0 = cfg.r0_fraction * params.d_sense
    ranges = np.maximum(obs.lidar * params.d_sense, 1e-6)
    near = ranges < r0
    if np.any(near):
        angles = beam_bearings(obs.n_beams)[near]
        r = ranges[near]
        mag = (1.0 / r - 1.0 / r0) / r ** 2
        force -= cfg.k_rep * np.array([np.sum(mag * np.cos(angles)), np.sum(mag * np.sin(angles))])
    return force


def apf_action(obs: Observation, params: WorldParams = DEFAULT_WORLD,
               cfg: BaselineConfig = DEFAULT_BASELINE) -> ActionCommand:
    force = apf_force(obs, params, cfg)
    if float(np.linalg.norm(force)) < 1e-12:
        return ActionCommand.from_controls(0.0, 0.0)
    error = math.atan2(force[1], force[0])
    accel = ACCELERATIONS[2] if abs(error) < cfg.align_tolerance else ACCELERATIONS[0]
    return ActionCommand.from_controls(accel, steer(error, params.dt))


# ============================================================
# Bug2
# ============================================================

class BugMode(Enum):
    MOTION_TO_GOAL = "motion_to_goal"
    BOUNDARY_FOLLOW = "boundary_follow"


@dataclass(frozen=True)
class BugState:
    mode: BugMode = BugMode.MOTION_TO_GOAL
    hit_distance: float = math.inf
    follow_side: int = 1          # +1 keeps the obstacle on the left, -1 on the right


def _speed_accel(speed: float, target: float, band: float = 0.1) -> float:
    if speed < target - band:
        return ACCELERATIONS[2]
    if speed > target + band:
        return ACCELERATIONS[0]
    return ACCELERATIONS[1]


def _motion_to_goal(obs: Observation, params: WorldParams, cfg: BaselineConfig) -> ActionCommand:
    error = math.atan2(obs.goal_rel[1], obs.goal_rel[0])
    speed = float(np.linalg.norm(obs.velocity))
    if abs(error) < cfg.align_tolerance:
        accel = ACCELERATIONS[2] if speed < cfg.cruise_speed else ACCELERATIONS[1]
    else:
        accel = ACCELERATIONS[0]
    return ActionCommand.from_controls(accel, steer(error, params.dt))


def _boundary_follow(obs: Observation, side: int, params: WorldParams,
                     cfg: BaselineConfig) -> ActionCommand:
    bearings = _wrapped_bearings(obs.n_beams)
    front = float(np.min(obs.lidar[np.abs(bearings) <= math.pi / 4]))
    on_side = (side * bearings >= math.pi / 6) & (side * bearings <= 5 * math.pi / 6)
    side_range = float(np.min(obs.lidar[on_side]))
    turn = TURN_RATES[2]
    if front < cfg.front_clear or side_range < cfg.keep_near:
        w = -side * turn
    elif side_range > cfg.keep_far:
        w = side * turn
    else:
        w = 0.0
    speed = float(np.linalg.norm(obs.velocity))
    accel = ACCELERATIONS[0] if front < cfg.front_clear else _speed_accel(speed, cfg.follow_speed)
    return ActionCommand.from_controls(accel, w)


def goal_bearing_clear(obs: Observation, cfg: BaselineConfig = DEFAULT_BASELINE) -> bool:
    bearing = math.atan2(obs.goal_rel[1], obs.goal_rel[0])
    offsets = np.angle(np.exp(1j * (_wrapped_bearings(obs.n_beams) - bearing)))
    cone = np.abs(offsets) <= cfg.leave_cone
    return bool(np.all(obs.lidar[cone] >= cfg.leave_clear))


def bug_action(obs: Observation, state: BugState, params: WorldParams = DEFAULT_WORLD,
               cfg: BaselineConfig = DEFAULT_BASELINE) -> tuple[ActionCommand, BugState]:
    goal_dist = float(np.linalg.norm(obs.goal_rel))
    bearings = _wrapped_bearings(obs.n_beams)

    if state.mode is BugMode.MOTION_TO_GOAL:
        ahead = np.abs(bearings) <= math.pi / 2
        if float(np.min(obs.lidar[ahead])) < cfg.d_trigger:
            nearest = int(np.argmin(np.where(ahead, obs.lidar, np.inf)))
            side = 1 if bearings[nearest] >= 0.0 else -1
            state = BugState(BugMode.BOUNDARY_FOLLOW, goal_dist, side)
            log.debug("bug: hit at goal distance %.2f, following with side %+d", goal_dist, side)
            return _boundary_follow(obs, side, params, cfg), state
        return _motion_to_goal(obs, params, cfg), state

    if goal_bearing_clear(obs, cfg) and goal_dist < state.hit_distance:
        state = replace(state, mode=BugMode.MOTION_TO_GOAL)
        return _motion_to_goal(obs, params, cfg), state
    return _boundary_follow(obs, state.follow_side, params, cfg), state
