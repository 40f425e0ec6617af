"""Proximal policy optimization baseline with a clipped surrogate, GAE and a
separate value network.

Training is driven per episode so it shares the harness loop with the
off-policy agents: steps accumulate until a rollout of ``rollout_length``
transitions is full, then ``epochs`` passes of minibatch updates run.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import MLP, Adam, PolicyNetwork
from .common import EpisodeMetrics, EpisodeTracker, RunningNorm, sample_action


@dataclass
class PpoConfig:
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.02
    value_coef: float = 0.5
    rollout_length: int = 256
    epochs: int = 4
    minibatch_size: int = 64


def compute_gae(rewards, values, next_values, dones, gamma, lam):
    """Generalized advantage estimates and the matching value targets.

    ``dones`` cuts both the bootstrap and the advantage recursion, so
    consecutive episodes in one rollout do not leak into each other.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    next_values = np.asarray(next_values, dtype=float)
    live = 1.0 - np.asarray(dones, dtype=float)
    deltas = rewards + gamma * next_values * live - values
    adv = np.zeros_like(deltas)
    running = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        running = deltas[t] + gamma * lam * live[t] * running
        adv[t] = running
    return adv, adv + values


def clipped_surrogate(ratio, advantages, clip):
    """Per-sample ``min(r A, clip(r, 1-eps, 1+eps) A)`` (to be maximized)."""
    ratio = np.asarray(ratio, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


class PpoAgent:
    name = "ppo"

    def __init__(self, obs_dim: int, n_actions: int, config: PpoConfig | None = None, seed=None):
        self.config = cfg = config or PpoConfig()
        self.obs_dim, self.n_actions = obs_dim, n_actions
        init_ss, sample_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(sample_ss)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)
        self.policy = PolicyNetwork(obs_dim, n_actions, cfg.hidden, init_rng)
        self.value = MLP(obs_dim, 1, cfg.hidden, init_rng)
        self.policy_opt = Adam(self.policy.params, cfg.lr)
        self.value_opt = Adam(self.value.params, cfg.lr)
        self.norm = RunningNorm(obs_dim)
        self._rollout: list = []

    def action_probabilities(self, observation) -> np.ndarray:
        probs, _, _ = self.policy.forward(self.norm(np.asarray(observation, dtype=float)))
        return probs

    def select_action(self, observation, greedy: bool = False) -> int:
        return sample_action(self.action_probabilities(observation), self.rng, greedy)

    def estimate(self, states, actions, rewards, next_states, dones):
        """Advantages (normalized over the rollout), returns and old log-probs.

        Old log-probabilities are recomputed in one batch with the current
        policy, so the first minibatch starts at ratio exactly 1.
        """
        cfg = self.config
        x, x_next = self.norm(states), self.norm(next_states)
        values, _ = self.value.forward(x)
        next_values, _ = self.value.forward(x_next)
        adv, returns = compute_gae(rewards, values[:, 0], next_values[:, 0], dones, cfg.gamma, cfg.gae_lambda)
        if len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        _, logp, _ = self.policy.forward(x)
        logp_old = logp[np.arange(len(actions)), actions]
        return adv, returns, logp_old

    def update_minibatch(self, x, actions, adv, returns, logp_old) -> dict:
        cfg = self.config
        n = len(x)
        rows = np.arange(n)
        probs, logp, cache = self.policy.forward(x)
        ratio = np.exp(logp[rows, actions] - logp_old)
        surrogate = clipped_surrogate(ratio, adv, cfg.clip)
        entropy = -np.sum(probs * logp, axis=1)

        # d(-surrogate)/d logp_a: -r A where the unclipped branch is active
        unclipped = ratio * adv <= np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
        g_logp_a = np.where(unclipped, -ratio * adv, 0.0)
        grad = -probs * g_logp_a[:, None]
        grad[rows, actions] += g_logp_a
        # d(-c H)/d logits = c * p * (logp + H)
        grad += cfg.entropy_coef * probs * (logp + entropy[:, None])
        grad /= n
        self.policy_opt.step(self.policy.params, self.policy.backward(cache, grad))

        v, vcache = self.value.forward(x)
        err = v[:, 0] - returns
        g_v = (cfg.value_coef * 2.0 * err / n)[:, None]
        self.value_opt.step(self.value.params, self.value.backward(vcache, g_v))
        return {
            "policy_loss": float(-np.mean(surrogate)),
            "value_loss": float(np.mean(err ** 2)),
            "entropy": float(np.mean(entropy)),
        }

    def update(self, states, actions, rewards, next_states, dones) -> dict:
        cfg = self.config
        actions = np.asarray(actions, dtype=int)
        adv, returns, logp_old = self.estimate(states, actions, rewards, next_states, dones)
        x = self.norm(states)
        stats = {}
        for _ in range(cfg.epochs):
            order = self.shuffle_rng.permutation(len(x))
            for start in range(0, len(x), cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                stats = self.update_minibatch(x[idx], actions[idx], adv[idx], returns[idx], logp_old[idx])
        return stats

    def train_episode(self, env, episode: int = 0) -> EpisodeMetrics:
        obs = env.reset()
        tracker = EpisodeTracker()
        done = False
        while not done:
            action = self.select_action(obs)
            result = env.step(action)
            self.norm.update(obs)
            self._rollout.append((obs, action, result.reward, result.observation, result.done))
            tracker.record(result)
            obs, done = result.observation, result.done
            if len(self._rollout) >= self.config.rollout_length:
                self._flush()
        return tracker.finish(episode)

    def _flush(self) -> None:
        s, a, r, s2, d = (np.array(c) for c in zip(*self._rollout))
        self._rollout = []
        self.update(s.astype(float), a, r.astype(float), s2.astype(float), d.astype(float))

    def state_dict(self) -> dict[str, np.ndarray]:
        arrays = {f"policy.{k}": v for k, v in self.policy.params.items()}
        arrays.update({f"value.{k}": v for k, v in self.value.params.items()})
        arrays.update(self.policy_opt.state_dict("policy_opt"))
        arrays.update(self.value_opt.state_dict("value_opt"))
        arrays.update(self.norm.state_dict("norm"))
        return arrays

    def load_state_dict(self, arrays) -> None:
        self.policy.load_params({k: arrays[f"policy.{k}"] for k in self.policy.params})
        self.value.load_params({k: arrays[f"value.{k}"] for k in self.value.params})
        self.policy_opt.load_state_dict(arrays, "policy_opt")
        self.value_opt.load_state_dict(arrays, "value_opt")
        self.norm.load_state_dict(arrays, "norm")

    def config_dict(self) -> dict:
        return asdict(self.config)
