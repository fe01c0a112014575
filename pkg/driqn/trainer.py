"""Training loop: noisy rollouts into the subgroup buffer, periodic updates,
evaluation, checkpoints and run-directory logs.
"""
from __future__ import annotations
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import Learner, NetworkPolicy
from .config import RunConfig, config_hash, config_to_dict
from .diagnostics import UpdateLedger
from .evaluation import MetricsLog, evaluate, write_episodes
from .noise import ComponentRanges, assign_subgroup, build_catalog, perturb
from .qnet import NumericalFault
from .replay import SubgroupBuffer
from .types import ActionCommand, ConfigError, Outcome, Transition
from .world import LayoutError, encode_observation, observation_dim, reset, sense, step

log = logging.getLogger(__name__)


@dataclass
class TrainStreams:
    """Independent generators so that evaluation and updates never shift rollouts."""
    init: np.random.Generator
    env: np.random.Generator
    noise: np.random.Generator
    act: np.random.Generator
    sample: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> TrainStreams:
        children = np.random.SeedSequence(seed).spawn(5)
        return cls(*(np.random.default_rng(c) for c in children))


def write_run_metadata(run_dir: Path, cfg: RunConfig, seed: int) -> None:
    doc = {
        "agent": cfg.agent.value,
        "strategy": cfg.strategy.value,
        "seed": seed,
        "intensity": cfg.noise.intensity,
        "eval_seeds": cfg.eval_seeds,
        "config_hash": config_hash(cfg),
        "config": config_to_dict(cfg),
    }
    (run_dir / "run.json").write_text(json.dumps(doc, indent=2))


def _fault_dump(fault: NumericalFault, ledger: UpdateLedger, step_: int) -> dict:
    dump = {"step": step_, "message": str(fault), "layer": fault.layer, **fault.dump}
    records = ledger.records
    if records:
        last = records[-1]
        dump.setdefault("lambda", last.lam)
        dump.setdefault("f", last.f)
        dump.setdefault("grad_norm", last.grad_norm)
    return dump


class Trainer:
    """One seeded training run writing into run_dir."""

    def __init__(self, cfg: RunConfig, seed: int, run_dir: str | Path):
        if not cfg.agent.learned:
            raise ConfigError(f"{cfg.agent.value} is not trained; evaluate it with `eval --agent`", "agent")
        self.cfg = cfg
        self.seed = seed
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.streams = TrainStreams.from_seed(seed)
        self.obs_dim = observation_dim(cfg.world)
        self.catalog = build_catalog(list(cfg.noise.kinds), cfg.noise.intensity)
        self.ledger = UpdateLedger(self.run_dir / "dro_log.jsonl" if cfg.agent.robust else None)
        self.ledger.add_listener(
            lambda rec: log.warning("dual QP did not converge at update %d (step %d)", rec.update, rec.step))
        self.learner = Learner(cfg, self.obs_dim, self.streams.init, self.ledger)
        self.buffer = SubgroupBuffer(len(self.catalog), cfg.replay.capacity, self.obs_dim,
                                     cfg.replay.min_fill,
                                     encoder=lambda o: encode_observation(o, cfg.world))
        self.metrics = MetricsLog(self.run_dir / "metrics.csv")
        self.step = 0
        self._window_update = 0
        self._grad_norms: list[float] = []

    def _new_episode(self):
        while True:
            episode_seed = int(self.streams.env.integers(2 ** 31))
            try:
                state, world = reset(episode_seed, self.cfg.randomize_layout, self.cfg.world)
            except LayoutError as exc:
                log.warning("%s; drawing another layout", exc)
                continue
            spec = assign_subgroup(self.streams.env, self.catalog)
            return state, world, spec

    def _observe(self, state, world, spec, ranges):
        obs = sense(state, world, self.cfg.world)
        return perturb(obs, spec, self.streams.noise, ranges, self.cfg.noise.calibration)

    def run(self) -> Path:
        cfg = self.cfg
        write_run_metadata(self.run_dir, cfg, self.seed)
        log.info("training %s (seed %d) for %d steps into %s",
                 cfg.agent.value, self.seed, cfg.total_steps, self.run_dir)
        try:
            while self.step < cfg.total_steps:
                self._episode()
        except NumericalFault as fault:
            dump = _fault_dump(fault, self.ledger, self.step)
            (self.run_dir / "fault.json").write_text(json.dumps(dump, indent=2, default=str))
            self.ledger.flush()
            log.error("numerical fault at step %d: %s", self.step, fault)
            raise
        self.ledger.flush()
        if cfg.agent.robust:
            log.info(self.ledger.generate_report())
        return self.run_dir

    def _episode(self) -> None:
        cfg = self.cfg
        state, world, spec = self._new_episode()
        ranges = ComponentRanges.for_world(world, cfg.world)
        obs = self._observe(state, world, spec, ranges)
        while True:
            action = self.learner.act(obs, self.step, self.streams.act)
            result = step(state, ActionCommand(action), world, cfg.world.dt, cfg.world)
            next_obs = self._observe(result.next_state, world, spec, ranges)
            # timeouts are truncations and keep bootstrapping
            done = result.outcome in (Outcome.COLLISION, Outcome.GOAL_REACHED)
            self.buffer.push(Transition(obs, action, result.reward, next_obs, done, spec.subgroup_id))
            self.step += 1
            self._after_step()
            if result.outcome.terminal or self.step >= cfg.total_steps:
                return
            state, obs = result.next_state, next_obs

    def _after_step(self) -> None:
        cfg = self.cfg
        if self.step % cfg.optim.train_every == 0 and self.buffer.ready_subgroups():
            batches = self.buffer.sample_per_subgroup(cfg.replay.batch_size, self.streams.sample)
            stats = self.learner.update(batches, self.step)
            self._grad_norms.append(stats.grad_norm)
        if self.step % cfg.distrl.target_sync == 0:
            self.learner.sync()
        if self.step % cfg.eval_interval == 0:
            self.evaluate_and_checkpoint()

    def evaluate_and_checkpoint(self) -> None:
        record, episodes = evaluate(NetworkPolicy(self.learner.online, self.cfg), self.cfg)
        entropy = None
        if self.cfg.agent.robust:
            entropy, _ = self.ledger.window_means(self._window_update)
            self._window_update = self.learner.updates
        grad_norm = float(np.mean(self._grad_norms)) if self._grad_norms else None
        self._grad_norms.clear()
        self.metrics.append(self.step, record, entropy, grad_norm)
        write_episodes(episodes, self.run_dir / "trajectories" / f"step_{self.step}")
        self.learner.save(self.run_dir / "checkpoints" / f"step_{self.step}.ckpt", self.step,
                          {"seed": self.seed, "config": config_to_dict(self.cfg)})
        self.ledger.flush()


def train(cfg: RunConfig, seed: int, run_dir: str | Path) -> Path:
    return Trainer(cfg, seed, run_dir).run()
