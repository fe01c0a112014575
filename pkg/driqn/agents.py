"""Learners (DQN, IQN, DRIQN, DRIQN-W) and the evaluation-time policies."""
from __future__ import annotations
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BugState, apf_action, bug_action
from .checkpoint import read_checkpoint, write_checkpoint
from .config import AgentKind, RestGradient, RunConfig, Strategy, config_hash
from .diagnostics import UpdateLedger, UpdateRecord
from .distrl import adaptive_spec, dqn_loss, epsilon_at, iqn_loss, select_action, sync_target
from .dro import (
    SubstitutionMode, descent_direction, solve_dual_qp, subgroup_stats, substitute_and_update,
)
from .qnet import NetworkParams, NetworkSpec, NumericalFault, init_params
from .types import GREEDY, N_ACTIONS, Batch, ConfigError, DistortionSpec, Observation
from .world import encode_observation

log = logging.getLogger(__name__)


def network_spec(cfg: RunConfig, obs_dim: int) -> NetworkSpec:
    return NetworkSpec(obs_dim=obs_dim, n_actions=N_ACTIONS, hidden=cfg.network.hidden,
                       n_cos=cfg.network.n_cos, distributional=cfg.agent.distributional)


def linear_lr(step: int, total_steps: int, start: float, end: float) -> float:
    frac = min(max(step / max(total_steps, 1), 0.0), 1.0)
    return start + (end - start) * frac


def distortion_for(strategy: Strategy, obs: Observation, eta_min: float) -> DistortionSpec:
    if strategy is Strategy.ADAPTIVE:
        return adaptive_spec(obs, eta_min)
    return GREEDY


@dataclass
class UpdateStats:
    loss: float
    grad_norm: float
    record: UpdateRecord | None = None


class Learner:
    """Online and target networks plus the update rule for one learned agent kind."""

    def __init__(self, cfg: RunConfig, obs_dim: int, rng: np.random.Generator,
                 ledger: UpdateLedger | None = None, online: NetworkParams | None = None,
                 target: NetworkParams | None = None, updates: int = 0):
        if not cfg.agent.learned:
            raise ConfigError(f"{cfg.agent.value} is a planner, not a learner", "agent")
        self.cfg = cfg
        self.kind = cfg.agent
        self.obs_dim = obs_dim
        self.rng = rng
        self.online = online if online is not None else init_params(network_spec(cfg, obs_dim), rng)
        self.target = target if target is not None else sync_target(self.online)
        self.updates = updates
        self.ledger = ledger
        self.mode = SubstitutionMode.WHOLE if self.kind is AgentKind.DRIQN_W else SubstitutionMode.LAST

    # ── acting ──

    def epsilon(self, step: int) -> float:
        d = self.cfg.distrl
        return epsilon_at(step, self.cfg.total_steps, d.eps_start, d.eps_end, d.eps_fraction)

    def act(self, obs: Observation, step: int, rng: np.random.Generator,
            explore: bool = True) -> int:
        if explore and rng.random() < self.epsilon(step):
            return int(rng.integers(N_ACTIONS))
        return self.greedy_action(obs, rng)

    def greedy_action(self, obs: Observation, rng: np.random.Generator) -> int:
        features = encode_observation(obs, self.cfg.world)
        spec = distortion_for(self.cfg.strategy, obs, self.cfg.distrl.eta_min)
        return select_action(self.online, features, self.cfg.distrl.k, spec, rng)

    # ── learning ──

    def lr_at(self, step: int) -> float:
        o = self.cfg.optim
        return linear_lr(step, self.cfg.total_steps, o.lr_start, o.lr_end)

    def update(self, batches: list[Batch], step: int) -> UpdateStats:
        """One gradient step from per-subgroup batches."""
        lr = self.lr_at(step)
        if self.kind.robust:
            stats = self._robust_update(batches, step, lr)
        else:
            stats = self._plain_update(Batch.concat(batches), lr)
        if not np.isfinite(stats.loss):
            raise NumericalFault("non-finite loss", dump={"loss": stats.loss, "update": self.updates})
        self.online.check_finite()
        self.updates += 1
        return stats

    def _plain_update(self, batch: Batch, lr: float) -> UpdateStats:
        d = self.cfg.distrl
        if self.kind is AgentKind.DQN:
            ev = dqn_loss(batch, self.online, self.target, d.gamma, d.kappa)
        else:
            ev = iqn_loss(batch, self.online, self.target, d.n, d.n_prime, d.kappa, d.gamma, self.rng)
        grad = ev.gradient().flat
        self.online = NetworkParams(self.online.spec, self.online.theta - lr * grad, self.online.layout)
        return UpdateStats(ev.loss, float(np.linalg.norm(grad)))

    def _robust_update(self, batches: list[Batch], step: int, lr: float) -> UpdateStats:
        d, dro = self.cfg.distrl, self.cfg.dro
        sg = subgroup_stats(batches, self.online, self.target, self.mode,
                            d.n, d.n_prime, d.kappa, d.gamma, self.rng)
        try:
            lam = solve_dual_qp(sg, tol=dro.qp_tol, max_iter=dro.qp_max_iter)
        except NumericalFault as fault:
            fault.dump.setdefault("subgroups", sg.subgroup_ids)
            raise
        delta = descent_direction(sg, lam)
        g_all = sg.mean_gradient
        g_rest = lam.weights @ sg.full if dro.rest_gradient is RestGradient.WEIGHTED else None
        lr_last = dro.lr_last if dro.lr_last is not None else lr
        self.online = substitute_and_update(self.online, g_all, delta, self.mode,
                                            lr_last, lr, dro.shrink_cap, g_rest)
        loss = float(sg.counts @ sg.f / sg.counts.sum()) if sg.J > 1 else float(sg.f[0])
        grad_norm = float(np.linalg.norm(g_all))
        record = UpdateRecord(
            update=self.updates, step=step, subgroups=list(sg.subgroup_ids),
            lam=lam.weights.tolist(), f=sg.f.tolist(), delta_norm=float(np.linalg.norm(delta)),
            grad_norm=grad_norm, converged=lam.converged, lambda_entropy=lam.entropy,
        )
        if self.ledger is not None:
            self.ledger.record(record)
        return UpdateStats(loss, grad_norm, record)

    def sync(self) -> None:
        self.target = sync_target(self.online)

    # ── persistence ──

    def metadata(self, step: int) -> dict:
        return {
            "agent": self.kind.value,
            "step": step,
            "updates": self.updates,
            "config_hash": config_hash(self.cfg),
            "rng_state": self.rng.bit_generator.state,
        }

    def save(self, path: str | Path, step: int, extra: dict | None = None) -> None:
        meta = self.metadata(step)
        meta.update(extra or {})
        write_checkpoint(path, self.online, meta, self.target)

    @classmethod
    def restore(cls, path: str | Path, cfg: RunConfig, obs_dim: int,
                ledger: UpdateLedger | None = None) -> tuple[Learner, dict]:
        """Rebuild a learner from a checkpoint written under the same config."""
        online, meta, target = read_checkpoint(path, obs_dim=obs_dim, config_hash=config_hash(cfg))
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_state"]
        learner = cls(cfg, obs_dim, rng, ledger, online=online, target=target,
                      updates=int(meta["updates"]))
        return learner, meta


# ============================================================
# Evaluation policies
# ============================================================

class Policy:
    """Maps a (noisy) observation to an action index; reset() between episodes."""

    def reset(self) -> None:
        pass

    def act(self, obs: Observation, rng: np.random.Generator) -> int:
        raise NotImplementedError


class ApfPolicy(Policy):
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg

    def act(self, obs, rng):
        return apf_action(obs, self.cfg.world, self.cfg.baselines).index


class BugPolicy(Policy):
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.state = BugState()

    def reset(self):
        self.state = BugState()

    def act(self, obs, rng):
        cmd, self.state = bug_action(obs, self.state, self.cfg.world, self.cfg.baselines)
        return cmd.index


class NetworkPolicy(Policy):
    """Exploration-free action selection from a parameter snapshot."""

    def __init__(self, params: NetworkParams, cfg: RunConfig):
        self.params = params.copy()
        self.cfg = cfg

    def act(self, obs, rng):
        features = encode_observation(obs, self.cfg.world)
        spec = distortion_for(self.cfg.strategy, obs, self.cfg.distrl.eta_min)
        return select_action(self.params, features, self.cfg.distrl.k, spec, rng)


def planner_policy(cfg: RunConfig) -> Policy:
    if cfg.agent is AgentKind.APF:
        return ApfPolicy(cfg)
    if cfg.agent is AgentKind.BUG:
        return BugPolicy(cfg)
    raise ConfigError(f"{cfg.agent.value} needs a checkpoint", "agent")
