"""Subgroup DRO: per-subgroup gradients, the dual QP over the simplex, and
substitution of the resulting direction into the parameter update.

With G the (J, d_s) matrix of subgroup gradients and f the subgroup losses,
the primal step

    min_{delta, zeta} ||delta|| + zeta   s.t.  f_j + <g_j, delta> <= zeta

has the dual  min_{lambda in simplex} 1/2 lambda^T G G^T lambda - lambda^T f,
and delta* = -G^T lambda*.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .distrl import iqn_loss
from .qnet import NetworkParams, NumericalFault
from .types import Batch, ContractViolation

log = logging.getLogger(__name__)


class SubstitutionMode(Enum):
    LAST = "last"
    WHOLE = "whole"


@dataclass
class SubgroupGradients:
    f: np.ndarray              # (J,)
    G: np.ndarray              # (J, d_s), restricted to the substitution slice
    full: np.ndarray           # (J, d), unrestricted subgroup gradients
    counts: np.ndarray         # (J,) transitions per subgroup
    subgroup_ids: list[int]
    slice: slice

    @property
    def J(self) -> int:
        return int(self.f.shape[0])

    @property
    def mean_gradient(self) -> np.ndarray:
        """Gradient of the uniform mean loss over every sampled transition."""
        if self.J == 1:
            return self.full[0]
        w = self.counts / self.counts.sum()
        return w @ self.full


@dataclass
class SimplexWeights:
    weights: np.ndarray
    objective: float = 0.0
    iterations: int = 0
    converged: bool = True

    @property
    def entropy(self) -> float:
        p = self.weights[self.weights > 0.0]
        return max(0.0, float(-(p * np.log(p)).sum()))


def subgroup_stats(batches: list[Batch], params: NetworkParams, target_params: NetworkParams,
                   mode: SubstitutionMode, n: int, n_prime: int, kappa: float, gamma: float,
                   rng: np.random.Generator) -> SubgroupGradients:
    """f_j = mean IQN loss on subgroup j's batch; row j of G its gradient on the slice."""
    if not batches:
        raise ContractViolation("no subgroup batches", operation="subgroup_stats")
    losses, grads = [], []
    for batch in batches:
        if len(batch) == 0:
            raise ContractViolation(f"empty batch for subgroup {batch.subgroup_id}",
                                    operation="subgroup_stats")
        ev = iqn_loss(batch, params, target_params, n, n_prime, kappa, gamma, rng)
        losses.append(ev.loss)
        grads.append(ev.gradient().flat)
    full = np.stack(grads)
    part = params.head_slice if mode is SubstitutionMode.LAST else slice(0, params.d)
    return SubgroupGradients(
        f=np.array(losses), G=full[:, part], full=full,
        counts=np.array([len(b) for b in batches], dtype=np.float64),
        subgroup_ids=[b.subgroup_id for b in batches], slice=part,
    )


# ============================================================
# Dual quadratic program
# ============================================================

def project_simplex(v: np.ndarray) -> SimplexWeights:
    """Euclidean projection onto the probability simplex by sort-and-threshold."""
    v = np.asarray(v, dtype=np.float64).ravel()
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, v.shape[0] + 1)
    rho = np.count_nonzero(u - cssv / ind > 0)
    theta = cssv[rho - 1] / rho
    return SimplexWeights(np.maximum(v - theta, 0.0))


def dual_objective(lam: np.ndarray, gram: np.ndarray, f: np.ndarray) -> float:
    return float(0.5 * lam @ gram @ lam - lam @ f)


def solve_dual_qp(sg: SubgroupGradients, tol: float = 1e-12, max_iter: int = 20000,
                  eps: float = 1e-12) -> SimplexWeights:
    """Projected gradient from the uniform point with step 1 / (||G G^T||_F + eps).

    Stops when the objective decrease falls below tol; at max_iter the best
    iterate is returned flagged as not converged.
    """
    f, G = sg.f, sg.G
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(G))):
        raise NumericalFault("non-finite subgroup losses or gradients",
                             dump={"f": f.tolist(), "grad_norms": np.linalg.norm(G, axis=1).tolist()})
    J = f.shape[0]
    if J == 1:
        return SimplexWeights(np.ones(1), dual_objective(np.ones(1), G @ G.T, f), 0, True)

    gram = G @ G.T
    step = 1.0 / (np.linalg.norm(gram) + eps)
    lam = np.full(J, 1.0 / J)
    obj = dual_objective(lam, gram, f)
    best, best_obj = lam, obj
    for it in range(1, max_iter + 1):
        lam = project_simplex(lam - step * (gram @ lam - f)).weights
        new_obj = dual_objective(lam, gram, f)
        if new_obj < best_obj:
            best, best_obj = lam, new_obj
        if obj - new_obj < tol:
            return SimplexWeights(best, best_obj, it, True)
        obj = new_obj
    log.warning("dual QP hit max_iter=%d (J=%d, objective %.3e)", max_iter, J, best_obj)
    return SimplexWeights(best, best_obj, max_iter, False)


def descent_direction(sg: SubgroupGradients, lam: SimplexWeights) -> np.ndarray:
    """delta* = -G^T lambda."""
    if lam.weights.shape != (sg.J,):
        raise ContractViolation("lambda does not match subgroup count", operation="descent_direction")
    if sg.J == 1:
        return -(sg.G[0] * lam.weights[0])
    return -(sg.G.T @ lam.weights)


# ============================================================
# Substitution
# ============================================================

def shrink(delta: np.ndarray, reference: np.ndarray, cap: float | None) -> np.ndarray:
    """Rescale delta so ||delta|| <= cap * ||reference||; untouched when already inside."""
    if cap is None:
        return delta
    norm = float(np.linalg.norm(delta))
    limit = cap * float(np.linalg.norm(reference))
    if norm <= limit:
        return delta
    return delta * (limit / norm)


def apply_substitution(theta: np.ndarray, head: slice, g_all: np.ndarray, delta: np.ndarray,
                       mode: SubstitutionMode, lr_last: float, lr_rest: float,
                       shrink_cap: float | None, g_rest: np.ndarray | None = None) -> np.ndarray:
    """Returns the updated theta; theta itself is not modified.

    LAST: head += lr_last * shrunk delta, other coordinates -= lr_rest * g_rest.
    WHOLE: theta += lr_last * shrunk delta.
    g_rest defaults to g_all.
    """
    if lr_last <= 0.0 or lr_rest <= 0.0:
        raise ContractViolation("learning rates must be positive", operation="substitute_and_update")
    part = head if mode is SubstitutionMode.LAST else slice(0, theta.shape[0])
    width = len(range(*part.indices(theta.shape[0])))
    if delta.shape != (width,):
        raise ContractViolation(f"direction has shape {delta.shape}, slice has {width} coordinates",
                                operation="substitute_and_update")
    new = theta.copy()
    step = lr_last * shrink(delta, g_all[part], shrink_cap)
    if mode is SubstitutionMode.LAST:
        rest = g_all if g_rest is None else g_rest
        mask = np.ones(theta.shape[0], dtype=bool)
        mask[part] = False
        new[mask] = theta[mask] - lr_rest * rest[mask]
    new[part] = theta[part] + step
    return new


def substitute_and_update(params: NetworkParams, g_all: np.ndarray, delta: np.ndarray,
                          mode: SubstitutionMode, lr_last: float, lr_rest: float,
                          shrink_cap: float | None, g_rest: np.ndarray | None = None) -> NetworkParams:
    theta = apply_substitution(params.theta, params.head_slice, g_all, delta, mode,
                               lr_last, lr_rest, shrink_cap, g_rest)
    return NetworkParams(params.spec, theta, list(params.layout))
