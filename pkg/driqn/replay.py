"""Experience replay partitioned by noise subgroup."""
from __future__ import annotations
import logging
from typing import Callable

import numpy as np

from .types import Batch, ContractViolation, DriqnError, Observation, Transition

log = logging.getLogger(__name__)


class BufferNotReady(DriqnError):
    """No subgroup holds enough transitions to sample from."""
    def __init__(self, sizes: list[int], min_fill: int):
        super().__init__(f"no subgroup reached min_fill={min_fill} (sizes {sizes})")
        self.sizes = sizes
        self.min_fill = min_fill


class _Ring:
    """Fixed-capacity FIFO storage for one subgroup."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.sequence = np.zeros(capacity, dtype=np.int64)
        self.cursor = 0
        self.size = 0

    def write(self, obs, action, reward, next_obs, done, seq):
        i = self.cursor
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = float(done)
        self.sequence[i] = seq
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_sequence(self) -> np.ndarray:
        """Stored sequence numbers, oldest first."""
        if self.size < self.capacity:
            return self.sequence[:self.size].copy()
        return np.roll(self.sequence, -self.cursor)


class SubgroupBuffer:
    """One ring per subgroup; pushes route by subgroup_id, samples stay subgroup-pure."""

    def __init__(self, n_subgroups: int, capacity: int, obs_dim: int, min_fill: int = 1000,
                 encoder: Callable[[Observation], np.ndarray] | None = None):
        if n_subgroups < 1:
            raise ContractViolation("need at least one subgroup", operation="SubgroupBuffer")
        per_group = max(1, capacity // n_subgroups)
        self.n_subgroups = n_subgroups
        self.capacity_per_subgroup = per_group
        self.min_fill = min_fill
        self.encoder = encoder or Observation.as_vector
        self._rings = [_Ring(per_group, obs_dim) for _ in range(n_subgroups)]
        self.inserted = [0] * n_subgroups
        self._seq = 0

    def push(self, t: Transition) -> None:
        if not 0 <= t.subgroup_id < self.n_subgroups:
            raise ContractViolation(f"unknown subgroup_id {t.subgroup_id}", operation="push")
        if not np.isfinite(t.reward):
            raise ContractViolation("non-finite reward", operation="push")
        self._rings[t.subgroup_id].write(self.encoder(t.obs), t.action, t.reward,
                                         self.encoder(t.next_obs), t.done, self._seq)
        self.inserted[t.subgroup_id] += 1
        self._seq += 1

    def sizes(self) -> list[int]:
        return [ring.size for ring in self._rings]

    def ready_subgroups(self) -> list[int]:
        return [j for j, ring in enumerate(self._rings) if ring.size >= self.min_fill]

    def sequence_numbers(self, subgroup_id: int) -> np.ndarray:
        return self._rings[subgroup_id].ordered_sequence()

    def sample_per_subgroup(self, batch_size: int, rng: np.random.Generator) -> list[Batch]:
        """Uniform with-replacement draws of batch_size per subgroup at or above min_fill."""
        ready = self.ready_subgroups()
        if not ready:
            raise BufferNotReady(self.sizes(), self.min_fill)
        batches = []
        for j in ready:
            ring = self._rings[j]
            idx = rng.integers(ring.size, size=batch_size)
            batches.append(Batch(
                obs=ring.obs[idx], actions=ring.actions[idx], rewards=ring.rewards[idx],
                next_obs=ring.next_obs[idx], dones=ring.dones[idx],
                subgroup_id=j, sequence=ring.sequence[idx],
            ))
        return batches

    def __len__(self) -> int:
        return sum(self.sizes())
