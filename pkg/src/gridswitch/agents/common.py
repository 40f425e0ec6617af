"""Pieces shared by all agents: replay storage, input standardization,
action sampling and per-episode metric bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

import numpy as np

from ..environment import StepResult


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def from_transitions(cls, transitions) -> Batch:
        s, a, r, s2, d = zip(*transitions)
        return cls(
            np.array(s, dtype=float), np.array(a, dtype=int), np.array(r, dtype=float),
            np.array(s2, dtype=float), np.array(d, dtype=float),
        )


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, rng=None):
        self.capacity = capacity
        self.rng = np.random.default_rng(rng)
        self.states = np.zeros((capacity, obs_dim))
        self.next_states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition) -> None:
        i = self._next
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        idx = self.rng.integers(0, self.size, size=batch_size)
        return Batch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.dones[idx],
        )


class RunningNorm:
    """Running mean/variance (Welford) used to standardize observations."""

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.clip = clip
        self.eps = eps

    def update(self, x) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self):
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.sqrt(self.m2 / self.count) + self.eps

    def __call__(self, x):
        if self.count == 0:
            return np.clip(x, -self.clip, self.clip)
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)

    def state_dict(self, prefix):
        return {f"{prefix}.count": np.array(self.count), f"{prefix}.mean": self.mean,
                f"{prefix}.m2": self.m2}

    def load_state_dict(self, arrays, prefix):
        self.count = int(arrays[f"{prefix}.count"])
        self.mean = np.array(arrays[f"{prefix}.mean"], dtype=float)
        self.m2 = np.array(arrays[f"{prefix}.m2"], dtype=float)


def sample_action(probs, rng: np.random.Generator, greedy: bool = False) -> int:
    """Draw from a categorical distribution; greedy picks the lowest-index argmax."""
    probs = np.asarray(probs, dtype=float)
    if greedy:
        return int(np.argmax(probs))
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(probs) - 1))


@dataclass
class EpisodeMetrics:
    """Per-episode summary written to the metrics CSV.

    ``generator_cost``, ``voltage_violation``, ``power_loss`` and
    ``line_overload`` are unweighted per-step means over the steps that did
    not hit the penalty.  ``open_lines`` is the count at episode end.
    """

    episode: int = 0
    cumulative_reward: float = 0.0
    generator_cost: float = 0.0
    voltage_violation: float = 0.0
    power_loss: float = 0.0
    line_overload: float = 0.0
    open_lines: int = 0
    penalties: int = 0

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class EpisodeTracker:
    def __init__(self):
        self.reward = 0.0
        self.steps = 0
        self.ok_steps = 0
        self.sums = np.zeros(4)
        self.open_lines = 0
        self.penalties = 0

    def record(self, result: StepResult) -> None:
        b = result.breakdown
        self.reward += result.reward
        self.steps += 1
        self.open_lines = b.open_lines
        if b.penalty_applied:
            self.penalties += 1
        else:
            self.ok_steps += 1
            self.sums += (b.cost_delta, b.voltage_violation, b.power_loss, b.line_overload)

    def finish(self, episode: int) -> EpisodeMetrics:
        means = self.sums / self.ok_steps if self.ok_steps else np.zeros(4)
        return EpisodeMetrics(
            episode, float(self.reward), *(float(m) for m in means),
            open_lines=self.open_lines, penalties=self.penalties,
        )
