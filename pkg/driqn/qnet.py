"""Implicit quantile network on a flat float64 parameter vector.

Layers (weights stored input-major, W has shape (fan_in, fan_out)):

    feature  : obs_dim -> hidden, ReLU
    tau      : n_cos   -> hidden, ReLU      (distributional nets only)
    merge    : feature * tau (element-wise)
    hidden   : hidden  -> hidden, ReLU
    output   : hidden  -> n_actions         ("the head")

The scalar-head variant used by DQN drops the tau layer and the merge.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field

import numpy as np

from .types import ContractViolation, DriqnError, N_ACTIONS

log = logging.getLogger(__name__)


class NumericalFault(DriqnError):
    """Non-finite values detected in parameters or losses."""
    def __init__(self, message: str, layer: str = "", dump: dict | None = None):
        super().__init__(f"{message} (layer: {layer})" if layer else message)
        self.layer = layer
        self.dump = dump or {}


@dataclass(frozen=True)
class NetworkSpec:
    obs_dim: int
    n_actions: int = N_ACTIONS
    hidden: int = 128
    n_cos: int = 64
    distributional: bool = True

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        layers = [("feature", self.obs_dim, self.hidden)]
        if self.distributional:
            layers.append(("tau", self.n_cos, self.hidden))
        layers.append(("hidden", self.hidden, self.hidden))
        layers.append(("output", self.hidden, self.n_actions))
        return layers


@dataclass(frozen=True)
class ParamSlot:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


def build_layout(spec: NetworkSpec) -> list[ParamSlot]:
    slots = []
    offset = 0
    for name, fan_in, fan_out in spec.layer_shapes():
        for suffix, shape in (("W", (fan_in, fan_out)), ("b", (fan_out,))):
            slot = ParamSlot(f"{name}.{suffix}", offset, shape)
            slots.append(slot)
            offset += slot.size
    return slots


@dataclass
class NetworkParams:
    spec: NetworkSpec
    theta: np.ndarray
    layout: list[ParamSlot] = field(default_factory=list)

    def __post_init__(self):
        if not self.layout:
            self.layout = build_layout(self.spec)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        expected = sum(s.size for s in self.layout)
        if self.theta.shape != (expected,):
            raise ContractViolation(f"theta has shape {self.theta.shape}, expected ({expected},)",
                                    operation="NetworkParams")
        self._slots = {s.name: s for s in self.layout}

    @property
    def d(self) -> int:
        return int(self.theta.shape[0])

    @property
    def head_slice(self) -> slice:
        """Contiguous slice covering output.W and output.b."""
        return slice(self._slots["output.W"].offset, self.d)

    def view(self, name: str) -> np.ndarray:
        slot = self._slots[name]
        return self.theta[slot.slice].reshape(slot.shape)

    def copy(self) -> NetworkParams:
        return NetworkParams(self.spec, self.theta.copy(), list(self.layout))

    def layer_names(self) -> list[str]:
        return [name for name, _, _ in self.spec.layer_shapes()]

    def check_finite(self) -> None:
        for name in self.layer_names():
            for part in ("W", "b"):
                if not np.all(np.isfinite(self.view(f"{name}.{part}"))):
                    raise NumericalFault("non-finite parameter", layer=f"{name}.{part}")


def init_params(spec: NetworkSpec, rng: np.random.Generator,
                zero_output: bool = False) -> NetworkParams:
    """Uniform fan-in initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    pieces = []
    for name, fan_in, fan_out in spec.layer_shapes():
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=fan_in * fan_out)
        b = rng.uniform(-bound, bound, size=fan_out)
        if zero_output and name == "output":
            w[:] = 0.0
            b[:] = 0.0
        pieces += [w, b]
    return NetworkParams(spec, np.concatenate(pieces))


# ============================================================
# Forward / backward
# ============================================================

def embed_tau(taus: np.ndarray, n_cos: int) -> np.ndarray:
    """cos(pi * j * tau) for j = 0..n_cos-1, broadcast over the trailing axis."""
    taus = np.asarray(taus, dtype=np.float64)
    if np.any(taus < 0.0) or np.any(taus > 1.0):
        raise ContractViolation("tau outside [0, 1]", operation="embed_tau")
    return np.cos(np.pi * taus[..., None] * np.arange(n_cos))


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class ForwardTrace:
    """Cached activations for one batch. Shapes use B obs, N taus, H hidden."""
    params: NetworkParams
    obs: np.ndarray                  # (B, D)
    z_feat: np.ndarray               # (B, H)
    h_feat: np.ndarray               # (B, H)
    embed: np.ndarray | None         # (B, N, C)
    z_tau: np.ndarray | None         # (B, N, H)
    h_tau: np.ndarray | None         # (B, N, H)
    merged: np.ndarray               # (B, N, H) or (B, H)
    z_hidden: np.ndarray
    h_hidden: np.ndarray
    out_shape: tuple[int, ...]


def forward(params: NetworkParams, obs: np.ndarray, taus: np.ndarray | None = None,
            trace: bool = False) -> np.ndarray | tuple[np.ndarray, ForwardTrace]:
    """Quantile values (B, N, A), or Q-values (B, A) for the scalar-head variant.

    obs is (B, D) or (D,); taus is (B, N) or (N,) and is required when the net is
    distributional.
    """
    params.check_finite()
    spec = params.spec
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if obs.shape[1] != spec.obs_dim:
        raise ContractViolation(f"observation dim {obs.shape[1]} != {spec.obs_dim}", operation="forward")

    z_feat = obs @ params.view("feature.W") + params.view("feature.b")
    h_feat = _relu(z_feat)

    embed = z_tau = h_tau = None
    if spec.distributional:
        if taus is None:
            raise ContractViolation("distributional net needs taus", operation="forward")
        taus = np.asarray(taus, dtype=np.float64)
        if taus.ndim == 1:
            taus = np.broadcast_to(taus, (obs.shape[0], taus.shape[0]))
        if taus.shape[0] != obs.shape[0] or taus.shape[1] < 1:
            raise ContractViolation(f"taus shape {taus.shape} does not match batch {obs.shape[0]}",
                                    operation="forward")
        embed = embed_tau(taus, spec.n_cos)
        z_tau = embed @ params.view("tau.W") + params.view("tau.b")
        h_tau = _relu(z_tau)
        merged = h_feat[:, None, :] * h_tau
    else:
        merged = h_feat

    z_hidden = merged @ params.view("hidden.W") + params.view("hidden.b")
    h_hidden = _relu(z_hidden)
    out = h_hidden @ params.view("output.W") + params.view("output.b")
    if not np.all(np.isfinite(out)):
        raise NumericalFault("non-finite network output", layer="output")
    if not trace:
        return out
    return out, ForwardTrace(params, obs, z_feat, h_feat, embed, z_tau, h_tau, merged,
                             z_hidden, h_hidden, out.shape)


@dataclass
class Gradient:
    flat: np.ndarray
    head_slice: slice

    @property
    def head(self) -> np.ndarray:
        return self.flat[self.head_slice]


def backward(tr: ForwardTrace, upstream: np.ndarray) -> Gradient:
    """Exact reverse-mode gradient of sum(upstream * out) w.r.t. theta."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != tr.out_shape:
        raise ContractViolation(f"upstream shape {upstream.shape} != output {tr.out_shape}",
                                operation="backward")
    params = tr.params
    grads: dict[str, np.ndarray] = {}
    lead = tuple(range(upstream.ndim - 1))

    def outer(a: np.ndarray, g: np.ndarray) -> np.ndarray:
        return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    grads["output.W"] = outer(tr.h_hidden, upstream)
    grads["output.b"] = upstream.sum(axis=lead)
    d_hidden = (upstream @ params.view("output.W").T) * (tr.z_hidden > 0.0)
    grads["hidden.W"] = outer(tr.merged, d_hidden)
    grads["hidden.b"] = d_hidden.sum(axis=lead)
    d_merged = d_hidden @ params.view("hidden.W").T

    if params.spec.distributional:
        d_tau = d_merged * tr.h_feat[:, None, :] * (tr.z_tau > 0.0)
        grads["tau.W"] = outer(tr.embed, d_tau)
        grads["tau.b"] = d_tau.sum(axis=(0, 1))
        d_feat = (d_merged * tr.h_tau).sum(axis=1)
    else:
        d_feat = d_merged
    d_feat = d_feat * (tr.z_feat > 0.0)
    grads["feature.W"] = tr.obs.T @ d_feat
    grads["feature.b"] = d_feat.sum(axis=0)

    flat = np.zeros(params.d)
    for slot in params.layout:
        flat[slot.slice] = grads[slot.name].ravel()
    return Gradient(flat, params.head_slice)
