"""Discrete soft actor-critic with twin dueling critics (DDSAC).

Per update step: critics regress on the soft Bellman target computed from
the target critics, the policy minimizes the expected ``alpha * log pi - Q``
under its own distribution, the temperature tracks a target entropy, and
target critics trail the online ones by Polyak averaging.  Expectations over
actions are computed exactly over the categorical distribution.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidDim
from ..nn import Adam, DuelingQNetwork, PolicyNetwork, soft_update
from .common import (
    Batch,
    EpisodeMetrics,
    EpisodeTracker,
    ReplayBuffer,
    RunningNorm,
    Transition,
    sample_action,
)

log = logging.getLogger(__name__)


@dataclass
class DdsacConfig:
    hidden: tuple[int, ...] = (256, 256)
    lr: float = 1e-4
    alpha_lr: float | None = None  # None: same as lr
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 32
    buffer_capacity: int = 100_000
    updates_per_episode: int | None = None  # None: one update per collected step
    warmup: int | None = None  # None: batch_size
    init_log_alpha: float = 0.0
    entropy_scale: float = 0.25
    log_floor: float = 1e-8


def target_entropy(action_dim: int, scale: float = 0.25) -> float:
    """``scale * -ln(1 / action_dim)``: a fraction of the uniform policy's entropy."""
    if action_dim < 2:
        raise InvalidDim(f"need at least 2 actions for an entropy target, got {action_dim}")
    return scale * -np.log(1.0 / action_dim)


def soft_q_targets(rewards, dones, next_probs, next_log_probs, next_q1, next_q2, alpha, gamma):
    """r + (1 - done) * gamma * sum_a pi(a|s') [min_i Q'_i(s', a) - alpha log pi(a|s')]."""
    q_min = np.minimum(next_q1, next_q2)
    soft_value = np.sum(next_probs * (q_min - alpha * next_log_probs), axis=1)
    return rewards + (1.0 - dones) * gamma * soft_value


class DdsacAgent:
    name = "ddsac"

    def __init__(self, obs_dim: int, n_actions: int, config: DdsacConfig | None = None, seed=None):
        self.config = cfg = config or DdsacConfig()
        self.obs_dim, self.n_actions = obs_dim, n_actions
        init_ss, sample_ss, buffer_ss = np.random.SeedSequence(seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(sample_ss)

        self.policy = PolicyNetwork(obs_dim, n_actions, cfg.hidden, init_rng)
        self.q1 = DuelingQNetwork(obs_dim, n_actions, cfg.hidden, init_rng)
        self.q2 = DuelingQNetwork(obs_dim, n_actions, cfg.hidden, init_rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.alpha_params = {"log_alpha": np.array(cfg.init_log_alpha, dtype=float)}
        self.target_entropy = target_entropy(n_actions, cfg.entropy_scale)

        self.policy_opt = Adam(self.policy.params, cfg.lr)
        self.q1_opt = Adam(self.q1.params, cfg.lr)
        self.q2_opt = Adam(self.q2.params, cfg.lr)
        self.alpha_opt = Adam(self.alpha_params, cfg.lr if cfg.alpha_lr is None else cfg.alpha_lr)

        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, np.random.default_rng(buffer_ss))
        self.norm = RunningNorm(obs_dim)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.alpha_params["log_alpha"]))

    def _clamped_log(self, logp):
        floor = np.log(self.config.log_floor)
        return np.maximum(logp, floor), logp > floor

    # -- acting ---------------------------------------------------------
    def action_probabilities(self, observation) -> np.ndarray:
        probs, _, _ = self.policy.forward(self.norm(np.asarray(observation, dtype=float)))
        return probs

    def select_action(self, observation, greedy: bool = False) -> int:
        return sample_action(self.action_probabilities(observation), self.rng, greedy)

    # -- learning -------------------------------------------------------
    def compute_targets(self, batch: Batch) -> np.ndarray:
        x_next = self.norm(batch.next_states)
        probs, logp, _ = self.policy.forward(x_next)
        logp, _ = self._clamped_log(logp)
        q1, _ = self.q1_target.forward(x_next)
        q2, _ = self.q2_target.forward(x_next)
        return soft_q_targets(
            batch.rewards, batch.dones, probs, logp, q1, q2, self.alpha, self.config.gamma
        )

    def update_critics(self, batch: Batch, targets=None):
        """One MSE step per critic; returns ``(loss1, loss2)``."""
        y = self.compute_targets(batch) if targets is None else targets
        x = self.norm(batch.states)
        rows = np.arange(len(y))
        losses = []
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            q, cache = net.forward(x)
            err = q[rows, batch.actions] - y
            losses.append(float(np.mean(err ** 2)))
            grad_q = np.zeros_like(q)
            grad_q[rows, batch.actions] = 2.0 * err / len(y)
            opt.step(net.params, net.backward(cache, grad_q))
        return tuple(losses)

    def policy_terms(self, batch: Batch):
        """Policy loss, its gradient w.r.t. logits, and the quantities the
        temperature loss needs; the critics are held fixed."""
        x = self.norm(batch.states)
        probs, logp, cache = self.policy.forward(x)
        logp, unclamped = self._clamped_log(logp)
        q1, _ = self.q1.forward(x)
        q2, _ = self.q2.forward(x)
        alpha = self.alpha
        g = alpha * logp - np.minimum(q1, q2)
        inner = np.sum(probs * g, axis=1, keepdims=True)
        grad = probs * (g - inner)
        pm = probs * unclamped
        grad += alpha * (pm - probs * pm.sum(axis=1, keepdims=True))
        grad /= len(x)
        return {
            "policy_loss": float(np.mean(inner)),
            "grad_logits": grad,
            "cache": cache,
            "probs": probs,
            "logp": logp,
        }

    def update_policy_and_temperature(self, batch: Batch) -> dict:
        terms = self.policy_terms(batch)
        self.policy_opt.step(self.policy.params, self.policy.backward(terms["cache"], terms["grad_logits"]))

        probs, logp = terms["probs"], terms["logp"]
        alpha = self.alpha
        # pi is a constant here; d alpha / d log_alpha = alpha
        alpha_loss = float(np.mean(-alpha * np.sum(probs * (logp + self.target_entropy), axis=1)))
        self.alpha_opt.step(self.alpha_params, {"log_alpha": np.array(alpha_loss)})
        entropy = float(np.mean(-np.sum(probs * logp, axis=1)))
        return {"policy_loss": terms["policy_loss"], "alpha_loss": alpha_loss, "entropy": entropy}

    def soft_update(self) -> None:
        soft_update(self.q1_target, self.q1, self.config.tau)
        soft_update(self.q2_target, self.q2, self.config.tau)

    def update(self, batch: Batch) -> dict:
        q1_loss, q2_loss = self.update_critics(batch)
        stats = self.update_policy_and_temperature(batch)
        self.soft_update()
        self.updates += 1
        stats.update(q1_loss=q1_loss, q2_loss=q2_loss, alpha=self.alpha)
        return stats

    def train_episode(self, env, episode: int = 0) -> EpisodeMetrics:
        """Roll out one episode into the buffer, then run the update steps."""
        cfg = self.config
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

        warmup = cfg.batch_size if cfg.warmup is None else cfg.warmup
        if len(self.buffer) >= max(warmup, 1):
            n_updates = cfg.updates_per_episode if cfg.updates_per_episode is not None else tracker.steps
            for _ in range(n_updates):
                stats = self.update(self.buffer.sample(cfg.batch_size))
            if n_updates:
                log.debug("episode %d: %s", episode, stats)
        return tracker.finish(episode)

    # -- persistence ----------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name in ("policy", "q1", "q2", "q1_target", "q2_target"):
            arrays.update({f"{name}.{k}": v for k, v in getattr(self, name).params.items()})
        arrays["log_alpha"] = self.alpha_params["log_alpha"]
        for name in ("policy_opt", "q1_opt", "q2_opt", "alpha_opt"):
            arrays.update(getattr(self, name).state_dict(name))
        arrays.update(self.norm.state_dict("norm"))
        return arrays

    def load_state_dict(self, arrays) -> None:
        for name in ("policy", "q1", "q2", "q1_target", "q2_target"):
            net = getattr(self, name)
            net.load_params({k: arrays[f"{name}.{k}"] for k in net.params})
        self.alpha_params["log_alpha"] = np.array(arrays["log_alpha"], dtype=float)
        for name in ("policy_opt", "q1_opt", "q2_opt", "alpha_opt"):
            getattr(self, name).load_state_dict(arrays, name)
        self.norm.load_state_dict(arrays, "norm")

    def config_dict(self) -> dict:
        return asdict(self.config)
