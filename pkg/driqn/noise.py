"""Per-episode observation perturbation and subgroup assignment."""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np

from .types import ConfigError, NoiseKind, NoiseSpec, Observation, WorldMap
from .world import DEFAULT_WORLD, WorldParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseCalibration:
    sigma0: float = 0.5
    s0: float = 0.25
    p0: float = 0.2


DEFAULT_CALIBRATION = NoiseCalibration()


@dataclass(frozen=True)
class ComponentRanges:
    """Closed value range of each observation component family."""
    velocity: tuple[float, float]
    goal_rel: tuple[float, float]
    lidar: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def for_world(cls, world: WorldMap, params: WorldParams = DEFAULT_WORLD) -> ComponentRanges:
        v = params.v_max + world.max_flow_speed()
        d = world.diagonal
        return cls(velocity=(-v, v), goal_rel=(-d, d))


def build_catalog(kinds: list[NoiseKind], intensity: float) -> list[NoiseSpec]:
    """One subgroup per kind, ids assigned in catalog order."""
    return [NoiseSpec(kind, intensity, j) for j, kind in enumerate(kinds)]


def assign_subgroup(episode_rng: np.random.Generator, catalog: list[NoiseSpec]) -> NoiseSpec:
    if not catalog:
        raise ConfigError("noise catalog is empty", key="noise.catalog")
    return catalog[int(episode_rng.integers(len(catalog)))]


# ── per-kind component perturbations ──

def _gaussian(x: np.ndarray, lo: float, hi: float, intensity: float,
              cal: NoiseCalibration, rng: np.random.Generator) -> np.ndarray:
    sigma = intensity * (hi - lo) / 2.0 * cal.sigma0
    return np.clip(x + rng.normal(0.0, sigma, size=x.shape), lo, hi)


def shot_noise(u: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """scale * Poisson(u / scale) on the unit scale; unbiased before clamping."""
    return scale * rng.poisson(np.maximum(u, 0.0) / scale)


def _poisson(x: np.ndarray, lo: float, hi: float, intensity: float,
             cal: NoiseCalibration, rng: np.random.Generator) -> np.ndarray:
    scale = intensity * cal.s0
    u = (x - lo) / (hi - lo)
    return np.clip(lo + shot_noise(u, scale, rng) * (hi - lo), lo, hi)


def _salt_pepper(x: np.ndarray, lo: float, hi: float, intensity: float,
                 cal: NoiseCalibration, rng: np.random.Generator) -> np.ndarray:
    p = min(intensity * cal.p0, 1.0)
    hit = rng.random(x.shape) < p
    salt = rng.random(x.shape) < 0.5
    out = x.copy()
    out[hit & salt] = hi
    out[hit & ~salt] = lo
    return out


_COMPONENT_NOISE = {
    NoiseKind.GAUSSIAN: _gaussian,
    NoiseKind.POISSON: _poisson,
    NoiseKind.SALT_PEPPER: _salt_pepper,
}


def occlusion_arc(n_beams: int, intensity: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of a contiguous (wrapping) arc of ceil(intensity * B / 2) beams."""
    length = min(math.ceil(intensity * n_beams / 2), n_beams)
    start = int(rng.integers(n_beams))
    return (start + np.arange(length)) % n_beams


def perturb(obs: Observation, spec: NoiseSpec, rng: np.random.Generator,
            ranges: ComponentRanges, calibration: NoiseCalibration = DEFAULT_CALIBRATION) -> Observation:
    if spec.kind is NoiseKind.NONE or spec.intensity == 0.0:
        return obs
    if spec.kind is NoiseKind.OCCLUSION:
        lidar = obs.lidar.copy()
        lidar[occlusion_arc(obs.n_beams, spec.intensity, rng)] = 1.0
        return Observation(velocity=obs.velocity, goal_rel=obs.goal_rel, lidar=lidar)

    apply = _COMPONENT_NOISE[spec.kind]
    return Observation(
        velocity=apply(obs.velocity, *ranges.velocity, spec.intensity, calibration, rng),
        goal_rel=apply(obs.goal_rel, *ranges.goal_rel, spec.intensity, calibration, rng),
        lidar=apply(obs.lidar, *ranges.lidar, spec.intensity, calibration, rng),
    )
