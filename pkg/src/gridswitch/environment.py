"""Transmission-switching MDP.

Action 0 is a no-op and action ``k >= 1`` toggles switchable line ``k - 1``.
Each step re-solves the AC power flow for the new topology.  Islanding or a
diverged power flow earns ``-penalty`` and ends the episode.  Otherwise the
reward is minus the weighted sum of five objective terms.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .case import GridCase, switchable_lines
from .errors import ActionOutOfRange, ConfigError, EpisodeFinished, InfeasibleBaseCase
from .powerflow import PowerFlowSolution, check_connectivity, solve_newton_raphson

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvConfig:
    w1: float = 0.1  # generator cost delta, $/h
    w2: float = 100.0  # voltage band violation, pu
    w3: float = 1.0  # thermal overload ratio
    w4: float = 0.1  # active losses, MW
    w5: float | None = None  # per open line; None means 10 / N_L
    penalty: float = 1000.0
    v_max: float = 1.05
    v_min: float = 0.95
    horizon: int = 10
    load_noise: float = 0.0
    seed: int = 0
    pf_tol: float = 1e-8
    pf_max_iter: int = 20
    cache_size: int = 4096

    def __post_init__(self):
        weights = (self.w1, self.w2, self.w3, self.w4, 0.0 if self.w5 is None else self.w5)
        if any(w < 0 for w in weights):
            raise ConfigError("reward weights must be non-negative")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not 0 <= self.load_noise < 1:
            raise ConfigError("load_noise must lie in [0, 1)")
        if not self.v_min < self.v_max:
            raise ConfigError("v_min must be below v_max")

    def open_line_weight(self, n_lines: int) -> float:
        return 10.0 / n_lines if self.w5 is None else self.w5


@dataclass(frozen=True)
class RewardBreakdown:
    cost_term: float = 0.0
    voltage_term: float = 0.0
    overload_term: float = 0.0
    loss_term: float = 0.0
    open_lines_term: float = 0.0
    penalty_applied: bool = False
    total: float = 0.0
    # unweighted quantities, reported as episode metrics
    cost_delta: float = 0.0
    voltage_violation: float = 0.0
    line_overload: float = 0.0
    power_loss: float = 0.0
    open_lines: int = 0


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    breakdown: RewardBreakdown
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ObservationLayout:
    """Slices of the flat observation vector, in concatenation order."""

    p_gen: slice
    v_mag: slice
    s_apparent: slice
    p_loss: slice
    p_load: slice
    line_status: slice
    t_norm: slice
    size: int

    @classmethod
    def for_case(cls, case: GridCase) -> ObservationLayout:
        n_l = len(switchable_lines(case))
        widths = [case.n_gen, case.n_bus, n_l, n_l, case.n_bus, n_l, 1]
        ends = np.cumsum(widths)
        starts = ends - widths
        return cls(*(slice(int(s), int(e)) for s, e in zip(starts, ends)), size=int(ends[-1]))


def action_space_size(case: GridCase) -> int:
    return len(switchable_lines(case)) + 1


def apparent_flow(solution: PowerFlowSolution) -> np.ndarray:
    """Per-line MVA flow, measured at whichever end carries more."""
    return np.maximum(np.abs(solution.s_from), np.abs(solution.s_to))


def compute_reward(
    case: GridCase,
    solution: PowerFlowSolution,
    status,
    baseline_cost: float,
    config: EnvConfig,
) -> RewardBreakdown:
    """Weighted objective terms for a converged, connected operating point.

    Buses that are de-energized (no path to the slack and nothing attached)
    are left out of the voltage term.
    """
    status = np.asarray(status)
    a = case.arrays
    cost_delta = case.generation_cost(solution.p_gen) - baseline_cost

    v = solution.v_mag[solution.energized]
    violation = float(np.sum(np.maximum(0.0, config.v_min - v) + np.maximum(0.0, v - config.v_max)))

    limited = (a.rate_a > 0) & status.astype(bool)
    s = apparent_flow(solution)
    overload = float(np.sum(np.maximum(0.0, s[limited] / a.rate_a[limited] - 1.0)))

    loss = float(np.sum(solution.p_loss_per_line))
    n_open = int(np.sum(1 - status))

    terms = (
        config.w1 * cost_delta,
        config.w2 * violation,
        config.w3 * overload,
        config.w4 * loss,
        config.open_line_weight(len(status)) * n_open,
    )
    return RewardBreakdown(
        *terms, penalty_applied=False, total=-sum(terms),
        cost_delta=cost_delta, voltage_violation=violation, line_overload=overload,
        power_loss=loss, open_lines=n_open,
    )


def encode_state(solution: PowerFlowSolution, p_load, status, t: int, horizon: int) -> np.ndarray:
    """Flat observation: [p_gen, v_mag, |S| per line, p_loss, p_load, status, t/T]."""
    status = np.asarray(status, dtype=float)
    return np.concatenate([
        solution.p_gen,
        solution.v_mag,
        apparent_flow(solution) * status,
        solution.p_loss_per_line * status,
        np.asarray(p_load, dtype=float),
        status,
        [t / horizon],
    ])


class TransmissionSwitchingEnv:
    """Single-threaded episode state around one :class:`GridCase`.

    Power-flow solutions are memoized per (loads, topology) so revisiting a
    topology is cheap; this does not change any returned value.
    """

    def __init__(self, case: GridCase, config: EnvConfig | None = None):
        self.case = case
        self.config = config or EnvConfig()
        self.lines = switchable_lines(case)
        self.n_lines = len(self.lines)
        self.n_actions = self.n_lines + 1
        self.layout = ObservationLayout.for_case(case)
        self.observation_size = self.layout.size
        self.rng = np.random.default_rng(self.config.seed)
        self._cache: OrderedDict = OrderedDict()
        self._episode_case = case
        self.status = None
        self.t = 0
        self.done = True
        self.baseline_cost = 0.0
        self._last_solution = None

    def seed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    # -- power flow with memoization ------------------------------------
    def _solve(self, status: np.ndarray):
        """Returns ``(solution, islanded)``; the solution is None when islanded."""
        key = status.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        full = np.array(self.case.arrays.status_init, dtype=bool)
        full[self.lines] = status.astype(bool)
        if not check_connectivity(self._episode_case, full).connected:
            result = (None, True)
        else:
            sol = solve_newton_raphson(
                self._episode_case, full, tol=self.config.pf_tol, max_iter=self.config.pf_max_iter
            )
            result = (sol, False)
            if not sol.converged:
                log.debug("power flow diverged after %d iterations", sol.iterations)
        self._cache[key] = result
        if len(self._cache) > self.config.cache_size:
            self._cache.popitem(last=False)
        return result

    def _p_load(self) -> np.ndarray:
        return self._episode_case.arrays.p_load

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.seed(seed)
        noise = self.config.load_noise
        if noise > 0:
            factors = 1.0 + self.rng.uniform(-noise, noise, size=self.case.n_bus)
            self._episode_case = self.case.with_load_scale(factors)
            self._cache.clear()
        self.status = np.array(self.case.arrays.status_init[self.lines], dtype=np.int8)
        self.t = 0
        sol, _ = self._solve(self.status)
        if sol is None or not sol.converged:
            raise InfeasibleBaseCase("power flow of the initial topology does not converge")
        self.baseline_cost = self._episode_case.generation_cost(sol.p_gen)
        self._last_solution = sol
        self.done = False
        return encode_state(sol, self._p_load(), self.status, 0, self.config.horizon)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeFinished("call reset() before stepping a finished episode")
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ActionOutOfRange(f"action {action} outside [0, {self.n_actions})")
        if action > 0:
            self.status[action - 1] ^= 1
        self.t += 1
        sol, islanded = self._solve(self.status)
        cfg = self.config
        failed = sol is None or not sol.converged
        if failed:
            breakdown = RewardBreakdown(
                penalty_applied=True, total=-cfg.penalty, open_lines=int(np.sum(1 - self.status))
            )
            # the last valid operating point stands in for the failed one
            shown = self._last_solution
            self.done = True
        else:
            breakdown = compute_reward(self._episode_case, sol, self.status, self.baseline_cost, cfg)
            shown = self._last_solution = sol
            self.done = self.t >= cfg.horizon
        obs = encode_state(shown, self._p_load(), self.status, self.t, cfg.horizon)
        info = {
            "converged": not failed,
            "islanded": islanded,
            "iterations": 0 if sol is None else sol.iterations,
        }
        return StepResult(obs, breakdown.total, self.done, breakdown, info)
