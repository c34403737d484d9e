"""Ring replay buffer that also indexes guardian takeovers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    obs: np.ndarray
    agent_action: np.ndarray
    applied_action: np.ndarray
    reward: float
    intervention: int
    next_obs: np.ndarray
    done: bool
    takeover: bool
    cost: float = 0.0
    expert_mean: np.ndarray | None = None
    expert_std: np.ndarray | None = None

    def __post_init__(self):
        if bool(self.takeover) != bool(self.intervention):
            raise ValueError("takeover must coincide with intervention")
        if not self.takeover and not np.array_equal(self.agent_action, self.applied_action):
            raise ValueError("applied action may differ from the agent action only on takeover")


_FIELDS = ("obs", "agent_action", "applied_action", "reward", "intervention", "next_obs",
           "done", "takeover", "cost", "expert_mean", "expert_std")


class Batch(dict):
    """Column dict of sampled transitions with attribute access."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def __len__(self):
        return len(self["reward"])


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2, dtype=np.float32):
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        n = self.capacity
        self.obs = np.zeros((n, obs_dim), dtype)
        self.next_obs = np.zeros((n, obs_dim), dtype)
        self.agent_action = np.zeros((n, act_dim), dtype)
        self.applied_action = np.zeros((n, act_dim), dtype)
        self.expert_mean = np.full((n, act_dim), np.nan, dtype)
        self.expert_std = np.full((n, act_dim), np.nan, dtype)
        self.reward = np.zeros(n, dtype)
        self.cost = np.zeros(n, dtype)
        self.intervention = np.zeros(n, dtype)
        self.done = np.zeros(n, dtype)
        self.takeover = np.zeros(n, bool)
        self.ptr = 0
        self.size = 0
        self._demo_idx: np.ndarray | None = None

    def __len__(self) -> int:
        return self.size

    @property
    def n_takeover(self) -> int:
        return len(self.demo_indices())

    def add(self, tr: Transition) -> None:
        i = self.ptr
        self.obs[i] = tr.obs
        self.next_obs[i] = tr.next_obs
        self.agent_action[i] = tr.agent_action
        self.applied_action[i] = tr.applied_action
        self.reward[i] = tr.reward
        self.cost[i] = tr.cost
        self.intervention[i] = tr.intervention
        self.done[i] = tr.done
        self.takeover[i] = tr.takeover
        self.expert_mean[i] = np.nan if tr.expert_mean is None else tr.expert_mean
        self.expert_std[i] = np.nan if tr.expert_std is None else tr.expert_std
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self._demo_idx = None

    def extend(self, transitions) -> None:
        for tr in transitions:
            self.add(tr)

    def demo_indices(self) -> np.ndarray:
        if self._demo_idx is None:
            self._demo_idx = np.flatnonzero(self.takeover[: self.size])
        return self._demo_idx

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch({f: getattr(self, f)[idx] for f in _FIELDS})

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample (with replacement) over all stored transitions."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.gather(rng.integers(0, self.size, size=batch_size))

    def sample_demo(self, batch_size: int, rng: np.random.Generator) -> Batch | None:
        """Uniform sample over takeover transitions only; ``None`` if there are none."""
        idx = self.demo_indices()
        if len(idx) == 0:
            return None
        return self.gather(idx[rng.integers(0, len(idx), size=batch_size)])

    def transition(self, i: int) -> Transition:
        return Transition(
            obs=self.obs[i].copy(),
            agent_action=self.agent_action[i].copy(),
            applied_action=self.applied_action[i].copy(),
            reward=float(self.reward[i]),
            intervention=int(self.intervention[i]),
            next_obs=self.next_obs[i].copy(),
            done=bool(self.done[i]),
            takeover=bool(self.takeover[i]),
            cost=float(self.cost[i]),
            expert_mean=None if np.isnan(self.expert_mean[i]).any() else self.expert_mean[i].copy(),
            expert_std=None if np.isnan(self.expert_std[i]).any() else self.expert_std[i].copy(),
        )
