"""Double DQN baseline: epsilon-greedy exploration, plain (non-dueling) Q head,
online network selects the bootstrap action and a hard-copied target
network evaluates it."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import MLP, Adam
from .common import Batch, EpisodeMetrics, EpisodeTracker, ReplayBuffer, RunningNorm, Transition


@dataclass
class DdqnConfig:
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 1e-4
    gamma: float = 0.99
    batch_size: int = 32
    buffer_capacity: int = 100_000
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995  # applied once per episode
    epsilon_min: float = 0.05
    target_update_freq: int = 100  # gradient steps between hard copies
    warmup: int | None = None  # None: batch_size


def double_q_targets(rewards, dones, next_q_online, next_q_target, gamma):
    """r + (1 - done) * gamma * Q_target(s', argmax_a Q_online(s', a))."""
    best = np.argmax(next_q_online, axis=1)
    evaluated = next_q_target[np.arange(len(best)), best]
    return rewards + (1.0 - dones) * gamma * evaluated


class DdqnAgent:
    name = "ddqn"

    def __init__(self, obs_dim: int, n_actions: int, config: DdqnConfig | None = None, seed=None):
        self.config = cfg = config or DdqnConfig()
        self.obs_dim, self.n_actions = obs_dim, n_actions
        init_ss, sample_ss, buffer_ss = np.random.SeedSequence(seed).spawn(3)
        self.rng = np.random.default_rng(sample_ss)
        self.online = MLP(obs_dim, n_actions, cfg.hidden, np.random.default_rng(init_ss))
        self.target = self.online.copy()
        self.opt = Adam(self.online.params, cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, np.random.default_rng(buffer_ss))
        self.norm = RunningNorm(obs_dim)
        self.epsilon = cfg.epsilon_start
        self.grad_steps = 0

    def q_values(self, observation) -> np.ndarray:
        q, _ = self.online.forward(self.norm(np.asarray(observation, dtype=float)))
        return q

    def select_action(self, observation, greedy: bool = False) -> int:
        if not greedy and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(observation)))

    def compute_targets(self, batch: Batch) -> np.ndarray:
        x_next = self.norm(batch.next_states)
        q_online, _ = self.online.forward(x_next)
        q_target, _ = self.target.forward(x_next)
        return double_q_targets(batch.rewards, batch.dones, q_online, q_target, self.config.gamma)

    def train_step(self, batch: Batch) -> float:
        y = self.compute_targets(batch)
        q, cache = self.online.forward(self.norm(batch.states))
        rows = np.arange(len(y))
        err = q[rows, batch.actions] - y
        grad = np.zeros_like(q)
        grad[rows, batch.actions] = 2.0 * err / len(y)
        self.opt.step(self.online.params, self.online.backward(cache, grad))
        self.grad_steps += 1
        if self.grad_steps % self.config.target_update_freq == 0:
            self.target = self.online.copy()
        return float(np.mean(err ** 2))

    def decay_epsilon(self) -> None:
        self.epsilon = max(self.epsilon * self.config.epsilon_decay, self.config.epsilon_min)

    def train_episode(self, env, episode: int = 0) -> EpisodeMetrics:
        cfg = self.config
        warmup = max(cfg.batch_size if cfg.warmup is None else cfg.warmup, 1)
        obs = env.reset()
        tracker = EpisodeTracker()
        done = False
        while not done:
            action = self.select_action(obs)
            result = env.step(action)
            self.norm.update(obs)
            self.buffer.add(Transition(obs, action, result.reward, result.observation, result.done))
            tracker.record(result)
            obs, done = result.observation, result.done
            if len(self.buffer) >= warmup:
                self.train_step(self.buffer.sample(cfg.batch_size))
        self.decay_epsilon()
        return tracker.finish(episode)

    def state_dict(self) -> dict[str, np.ndarray]:
        arrays = {f"online.{k}": v for k, v in self.online.params.items()}
        arrays.update({f"target.{k}": v for k, v in self.target.params.items()})
        arrays.update(self.opt.state_dict("opt"))
        arrays.update(self.norm.state_dict("norm"))
        arrays["epsilon"] = np.array(self.epsilon)
        arrays["grad_steps"] = np.array(self.grad_steps)
        return arrays

    def load_state_dict(self, arrays) -> None:
        self.online.load_params({k: arrays[f"online.{k}"] for k in self.online.params})
        self.target.load_params({k: arrays[f"target.{k}"] for k in self.target.params})
        self.opt.load_state_dict(arrays, "opt")
        self.norm.load_state_dict(arrays, "norm")
        self.epsilon = float(arrays["epsilon"])
        self.grad_steps = int(arrays["grad_steps"])

    def config_dict(self) -> dict:
        return asdict(self.config)
