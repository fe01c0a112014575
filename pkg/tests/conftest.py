"""Shared fixtures: run configs small enough for the test suite."""
import pytest

from driqn.config import (
    AgentKind, DistRLConfig, NetworkConfig, NoiseConfig, OptimConfig, ReplayConfig, RunConfig,
)
from driqn.types import NoiseKind
from driqn.world import WorldParams


def small_config(agent: AgentKind = AgentKind.DRIQN, **changes) -> RunConfig:
    cfg = RunConfig(
        agent=agent,
        seeds=(0,),
        total_steps=150,
        eval_interval=75,
        eval_envs=2,
        world=WorldParams(n_beams=8, t_max=100),
        noise=NoiseConfig(kinds=(NoiseKind.GAUSSIAN, NoiseKind.POISSON), intensity=0.6),
        network=NetworkConfig(hidden=8, n_cos=4),
        distrl=DistRLConfig(n=4, n_prime=4, k=4, target_sync=20),
        optim=OptimConfig(lr_start=1e-3, lr_end=1e-5),
        replay=ReplayConfig(capacity=2000, min_fill=20, batch_size=4),
    )
    return cfg.replace(**changes)


SMALL_YAML = """\
agent: {agent}
seeds: [0]
total_steps: 150
eval_interval: 75
eval_envs: 2
world:
  n_beams: 8
  t_max: 100
noise:
  kinds: [gaussian, poisson]
  intensity: 0.6
network:
  hidden: 8
  n_cos: 4
distrl:
  n: 4
  n_prime: 4
  k: 4
  target_sync: 20
optim:
  lr_start: 0.001
  lr_end: 0.00001
replay:
  capacity: 2000
  min_fill: 20
  batch_size: 4
"""


@pytest.fixture
def small_cfg() -> RunConfig:
    return small_config()


@pytest.fixture
def small_yaml(tmp_path):
    def write(agent: str = "driqn", name: str = "run.yaml"):
        path = tmp_path / name
        path.write_text(SMALL_YAML.format(agent=agent))
        return path
    return write
