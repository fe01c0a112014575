"""Distributional losses, TD targets, distortion and action selection."""
from __future__ import annotations
import logging
from dataclasses import dataclass

import numpy as np

from .qnet import ForwardTrace, Gradient, NetworkParams, backward, forward
from .types import Batch, ContractViolation, DistortionKind, DistortionSpec, GREEDY, Observation

log = logging.getLogger(__name__)


# ============================================================
# Distortion
# ============================================================

def distort(tau, spec: DistortionSpec):
    """beta(tau): identity, or CVaR_eta which maps tau onto [0, eta]."""
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr < 0.0) or np.any(tau_arr > 1.0):
        raise ContractViolation("tau outside [0, 1]", operation="distort")
    if spec.kind is DistortionKind.IDENTITY:
        return tau
    return spec.eta * tau


def adaptive_eta(obs: Observation, eta_min: float = 0.25) -> float:
    """CVaR level from the nearest LiDAR return; 1.0 (greedy) when nothing is seen."""
    nearest = float(np.min(obs.lidar))
    if nearest >= 1.0:
        return 1.0
    return eta_min + (1.0 - eta_min) * min(max(nearest, 0.0), 1.0)


def adaptive_spec(obs: Observation, eta_min: float = 0.25) -> DistortionSpec:
    eta = adaptive_eta(obs, eta_min)
    if eta == 1.0:
        return GREEDY
    return DistortionSpec(DistortionKind.CVAR, eta)


# ============================================================
# TD errors and quantile Huber loss
# ============================================================

def td_error_matrix(r, gamma: float, z_next: np.ndarray, z_cur: np.ndarray, done=False) -> np.ndarray:
    """Entry (i, j) = r + gamma * Z_next[j] * (1 - done) - Z_cur[i].

    Leading batch axes broadcast: z_next (..., N'), z_cur (..., N), r and done (...).
    """
    r = np.asarray(r, dtype=np.float64)[..., None, None]
    live = 1.0 - np.asarray(done, dtype=np.float64)[..., None, None]
    z_next = np.asarray(z_next, dtype=np.float64)
    z_cur = np.asarray(z_cur, dtype=np.float64)
    return r + gamma * live * z_next[..., None, :] - z_cur[..., :, None]


def huber(u, kappa: float):
    abs_u = np.abs(u)
    return np.where(abs_u <= kappa, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))


def huber_quantile(u, tau, kappa: float):
    """rho_tau^kappa(u) = |tau - 1{u < 0}| * L_kappa(u) / kappa."""
    if kappa <= 0.0:
        raise ContractViolation("kappa must be positive", operation="huber_quantile")
    u = np.asarray(u, dtype=np.float64)
    weight = np.abs(tau - (u < 0.0))
    result = weight * huber(u, kappa) / kappa
    return float(result) if result.ndim == 0 else result


def huber_quantile_grad(u: np.ndarray, tau, kappa: float) -> np.ndarray:
    """d rho / d u."""
    weight = np.abs(tau - (u < 0.0))
    slope = np.where(np.abs(u) <= kappa, u, kappa * np.sign(u))
    return weight * slope / kappa


# ============================================================
# Losses
# ============================================================

@dataclass
class LossEval:
    """A loss value with what backward needs to differentiate it."""
    loss: float
    trace: ForwardTrace
    upstream: np.ndarray

    def gradient(self) -> Gradient:
        return backward(self.trace, self.upstream)


def greedy_next_quantiles(target_params: NetworkParams, next_obs: np.ndarray,
                          target_taus: np.ndarray) -> np.ndarray:
    """Z_{tau'}(s', a*) with a* = argmax of the target net's mean over tau'."""
    z_all = forward(target_params, next_obs, target_taus)                   # (B, N', A)
    best = np.argmax(z_all.mean(axis=1), axis=1)
    return np.take_along_axis(z_all, best[:, None, None], axis=2)[:, :, 0]   # (B, N')


def iqn_loss(batch: Batch, params: NetworkParams, target_params: NetworkParams,
             n: int, n_prime: int, kappa: float, gamma: float,
             rng: np.random.Generator | None = None,
             taus: np.ndarray | None = None, target_taus: np.ndarray | None = None) -> LossEval:
    """Batch mean of (1/N') sum_i sum_j rho_{tau_i}(delta_ij).

    Online taus are drawn before target taus when sampled from rng.
    """
    size = len(batch)
    if size == 0:
        raise ContractViolation("empty batch", operation="iqn_loss")
    if taus is None:
        taus = rng.random((size, n))
    if target_taus is None:
        target_taus = rng.random((size, n_prime))
    taus = np.asarray(taus, dtype=np.float64).reshape(size, -1)
    target_taus = np.asarray(target_taus, dtype=np.float64).reshape(size, -1)
    n_prime = target_taus.shape[1]

    z_next = greedy_next_quantiles(target_params, batch.next_obs, target_taus)
    out, tr = forward(params, batch.obs, taus, trace=True)                   # (B, N, A)
    actions = batch.actions.astype(np.int64)
    z_cur = np.take_along_axis(out, actions[:, None, None], axis=2)[:, :, 0]  # (B, N)

    delta = td_error_matrix(batch.rewards, gamma, z_next, z_cur, batch.dones)  # (B, N, N')
    tau_col = taus[:, :, None]
    rho = huber_quantile(delta, tau_col, kappa)
    loss = float(np.sum(rho) / n_prime / size)

    d_zcur = -huber_quantile_grad(delta, tau_col, kappa).sum(axis=2) / n_prime / size
    upstream = np.zeros_like(out)
    np.put_along_axis(upstream, actions[:, None, None], d_zcur[:, :, None], axis=2)
    return LossEval(loss, tr, upstream)


def dqn_loss(batch: Batch, params: NetworkParams, target_params: NetworkParams,
             gamma: float, kappa: float = 1.0) -> LossEval:
    """Batch mean Huber loss of r + gamma max_a' Q'(s', a') - Q(s, a)."""
    size = len(batch)
    if size == 0:
        raise ContractViolation("empty batch", operation="dqn_loss")
    q_next = forward(target_params, batch.next_obs).max(axis=1)
    q, tr = forward(params, batch.obs, trace=True)
    actions = batch.actions.astype(np.int64)
    q_taken = q[np.arange(size), actions]
    delta = batch.rewards + gamma * (1.0 - batch.dones) * q_next - q_taken
    loss = float(np.mean(huber(delta, kappa)))
    upstream = np.zeros_like(q)
    slope = np.where(np.abs(delta) <= kappa, delta, kappa * np.sign(delta))
    upstream[np.arange(size), actions] = -slope / size
    return LossEval(loss, tr, upstream)


# ============================================================
# Acting
# ============================================================

def action_values(params: NetworkParams, features: np.ndarray, k: int, spec: DistortionSpec,
                  rng: np.random.Generator) -> np.ndarray:
    """(1/K) sum_k Z_{beta(tau_k)}(s, a) per action, or Q(s, a) for scalar heads."""
    if not params.spec.distributional:
        return forward(params, features)[0]
    if k < 1:
        raise ContractViolation("K must be at least 1", operation="select_action")
    taus = distort(rng.random(k), spec)
    return forward(params, features, taus)[0].mean(axis=0)


def select_action(params: NetworkParams, features: np.ndarray, k: int, spec: DistortionSpec,
                  rng: np.random.Generator) -> int:
    """Argmax of the distorted mean; ties go to the lowest index."""
    return int(np.argmax(action_values(params, features, k, spec, rng)))


def sync_target(params: NetworkParams) -> NetworkParams:
    return params.copy()


def epsilon_at(step: int, total_steps: int, start: float = 1.0, end: float = 0.05,
               fraction: float = 0.2) -> float:
    """Linear anneal from start to end over the first fraction of training."""
    horizon = max(1, int(total_steps * fraction))
    if step >= horizon:
        return end
    return start + (end - start) * step / horizon
