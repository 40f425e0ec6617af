"""Experiment orchestration: seeded training runs, metric CSVs, checkpoints,
greedy evaluation and cross-seed aggregation.

Output layout for ``run_training`` under ``out_dir``::

    <algorithm>/seed_<n>/metrics.csv
    <algorithm>/seed_<n>/checkpoint.npz

``aggregate_runs`` writes ``aggregate_<metric>.csv`` (episode, mean,
stderr, n_seeds) next to the seed directories it summarizes.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agents.common import EpisodeMetrics, EpisodeTracker
from .agents.ddqn import DdqnAgent, DdqnConfig
from .agents.ddsac import DdsacAgent, DdsacConfig
from .agents.ppo import PpoAgent, PpoConfig
from .case import load_case
from .environment import EnvConfig, TransmissionSwitchingEnv
from .errors import CheckpointMismatch, ConfigError, GridSwitchError, IoError
from .nn import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

AGENTS = {
    "ddsac": (DdsacAgent, DdsacConfig),
    "ddqn": (DdqnAgent, DdqnConfig),
    "ppo": (PpoAgent, PpoConfig),
}
METRIC_COLUMNS = EpisodeMetrics.columns()
AGGREGATED = [c for c in METRIC_COLUMNS if c != "episode"]


@dataclass
class RunConfig:
    case_path: str = "case118"
    algorithm: str = "ddsac"
    episodes: int = 200
    seeds: list[int] = field(default_factory=lambda: [0])
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: dict = field(default_factory=dict)
    out_dir: str = "runs"

    def __post_init__(self):
        if self.algorithm not in AGENTS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {sorted(AGENTS)}")
        if self.episodes < 1:
            raise ConfigError("episodes must be at least 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        agent_config(self.algorithm, self.agent)  # validates override keys early


_TOP_KEYS = {"case": "case_path", "case_path": "case_path", "algo": "algorithm",
             "algorithm": "algorithm", "episodes": "episodes", "seeds": "seeds",
             "out": "out_dir", "out_dir": "out_dir"}


def config_from_mapping(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from a flat mapping.

    Top-level keys are ``case``, ``algo``, ``episodes``, ``seeds`` and
    ``out``; environment and agent settings use ``env.<field>`` and
    ``agent.<field>``.
    """
    base = base or RunConfig()
    top, env, agent = {}, {}, dict(base.agent)
    env_fields = {f.name for f in fields(EnvConfig)}
    for key, value in data.items():
        if key in _TOP_KEYS:
            top[_TOP_KEYS[key]] = value
        elif key.startswith("env."):
            name = key[4:]
            if name not in env_fields:
                raise ConfigError(f"unknown environment setting {key!r}")
            env[name] = value
        elif key.startswith("agent."):
            agent[key[6:]] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "seeds" in top:
        top["seeds"] = parse_seeds(top["seeds"])
    try:
        env_cfg = replace(base.env, **env)
        return replace(base, env=env_cfg, agent=agent, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object of flat key/value pairs")
    return config_from_mapping(data)


def parse_seeds(value) -> list[int]:
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
    elif isinstance(value, int):
        parts = [value]
    else:
        parts = list(value)
    try:
        return [int(p) for p in parts]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds must be integers, got {value!r}") from exc


def agent_config(algorithm: str, overrides: dict):
    _, cfg_cls = AGENTS[algorithm]
    known = {f.name for f in fields(cfg_cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown {algorithm} setting(s): {sorted(unknown)}")
    values = dict(overrides)
    if "hidden" in values:
        values["hidden"] = tuple(int(h) for h in values["hidden"])
    return cfg_cls(**values)


def split_seed(seed: int) -> tuple[int, int]:
    """Derive independent (environment, agent) seeds from one run seed."""
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return int(env_ss.generate_state(1)[0]), int(agent_ss.generate_state(1)[0])


def make_agent(algorithm: str, obs_dim: int, n_actions: int, overrides: dict, seed):
    agent_cls, _ = AGENTS[algorithm]
    return agent_cls(obs_dim, n_actions, agent_config(algorithm, overrides), seed=seed)


def write_metrics(path, rows: list[EpisodeMetrics]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRIC_COLUMNS)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(row).values()])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_metrics(path) -> list[EpisodeMetrics]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != METRIC_COLUMNS:
                raise ConfigError(f"{path} does not have the metrics columns {METRIC_COLUMNS}")
            types = {f.name: f.type for f in fields(EpisodeMetrics)}
            return [
                EpisodeMetrics(**{k: (int(v) if types[k] in (int, "int") else float(v)) for k, v in row.items()})
                for row in reader
            ]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def run_dir(config: RunConfig, seed: int) -> Path:
    return Path(config.out_dir) / config.algorithm / f"seed_{seed}"


def run_training(config: RunConfig, seed: int) -> Path:
    """Train one agent for ``config.episodes`` episodes; returns the metrics CSV path."""
    case = load_case(config.case_path)
    env_seed, agent_seed = split_seed(seed)
    env = TransmissionSwitchingEnv(case, replace(config.env, seed=env_seed))
    agent = make_agent(config.algorithm, env.observation_size, env.n_actions, config.agent, agent_seed)

    out = run_dir(config, seed)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc

    rows = []
    for episode in range(config.episodes):
        rows.append(agent.train_episode(env, episode))
        if (episode + 1) % 50 == 0:
            recent = np.mean([r.cumulative_reward for r in rows[-50:]])
            log.info("%s seed %d episode %d: mean reward (last 50) %.3f",
                     config.algorithm, seed, episode + 1, recent)
    path = write_metrics(out / "metrics.csv", rows)
    meta = {
        "algorithm": config.algorithm,
        "obs_dim": env.observation_size,
        "n_actions": env.n_actions,
        "case": str(config.case_path),
        "seed": seed,
        "episodes": config.episodes,
        "agent_config": agent.config_dict(),
        "env_config": asdict(env.config),
    }
    try:
        save_checkpoint(out / "checkpoint.npz", agent.state_dict(), meta)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint in {out}: {exc}") from exc
    return path


def _train_one(args):
    config, seed = args
    return run_training(config, seed)


def run_multi_seed(config: RunConfig, workers: int = 1) -> dict[str, Path]:
    """Train every seed independently, then aggregate; returns metric -> CSV path."""
    if len(config.seeds) < 2:
        raise ConfigError("multi-seed runs need at least 2 distinct seeds")
    jobs = [(config, s) for s in config.seeds]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                list(pool.map(_train_one, jobs))
        else:
            for job in jobs:
                _train_one(job)
    except GridSwitchError as exc:
        raise type(exc)(f"run failed: {exc}") from exc
    return aggregate_seed_dirs(Path(config.out_dir) / config.algorithm)


def mean_and_stderr(values: np.ndarray):
    """Column-wise mean and standard error (sample std / sqrt(n)) over axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ConfigError("standard error needs at least 2 seeds")
    return values.mean(axis=0), values.std(axis=0, ddof=1) / np.sqrt(n)


def aggregate_seed_dirs(algo_dir) -> dict[str, Path]:
    algo_dir = Path(algo_dir)
    seed_dirs = sorted(p for p in algo_dir.glob("seed_*") if (p / "metrics.csv").is_file())
    runs = [read_metrics(p / "metrics.csv") for p in seed_dirs]
    if len(runs) < 2:
        raise ConfigError(f"{algo_dir} holds {len(runs)} finished run(s); need at least 2")
    n_episodes = min(len(r) for r in runs)
    if any(len(r) != n_episodes for r in runs):
        log.warning("runs in %s differ in length; aggregating the first %d episodes", algo_dir, n_episodes)
    written = {}
    for metric in AGGREGATED:
        table = np.array([[getattr(row, metric) for row in r[:n_episodes]] for r in runs], dtype=float)
        mean, stderr = mean_and_stderr(table)
        path = algo_dir / f"aggregate_{metric}.csv"
        try:
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["episode", "mean", "stderr", "n_seeds"])
                for ep in range(n_episodes):
                    writer.writerow([ep, repr(float(mean[ep])), repr(float(stderr[ep])), len(runs)])
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        written[metric] = path
    return written


def aggregate_runs(runs_dir) -> dict[str, dict[str, Path]]:
    """Aggregate every algorithm directory under ``runs_dir``.

    ``runs_dir`` may also be a single algorithm directory holding ``seed_*``.
    """
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        raise IoError(f"{runs_dir} is not a directory")
    if any(runs_dir.glob("seed_*/metrics.csv")):
        return {runs_dir.name: aggregate_seed_dirs(runs_dir)}
    out = {}
    for algo_dir in sorted(p for p in runs_dir.iterdir() if p.is_dir()):
        if any(algo_dir.glob("seed_*/metrics.csv")):
            out[algo_dir.name] = aggregate_seed_dirs(algo_dir)
    if not out:
        raise ConfigError(f"no finished runs found under {runs_dir}")
    return out


def rollout_episodes(env, choose, episodes: int) -> list[EpisodeMetrics]:
    """Run ``episodes`` episodes with ``choose(observation) -> action``."""
    rows = []
    for ep in range(episodes):
        obs = env.reset()
        tracker = EpisodeTracker()
        done = False
        while not done:
            result = env.step(choose(obs))
            tracker.record(result)
            obs, done = result.observation, result.done
        rows.append(tracker.finish(ep))
    return rows


def summarize(rows: list[EpisodeMetrics]) -> dict[str, float]:
    report = {"episodes": len(rows)}
    for metric in AGGREGATED:
        report[f"mean_{metric}"] = float(np.mean([getattr(r, metric) for r in rows]))
    return report


def random_policy_baseline(env, episodes: int, seed=0) -> dict[str, float]:
    """Uniform-random actions; the reference level for learning checks."""
    rng = np.random.default_rng(seed)
    return summarize(rollout_episodes(env, lambda _obs: int(rng.integers(env.n_actions)), episodes))


def load_agent(checkpoint, env=None):
    """Rebuild an agent from a checkpoint; checks dimensions against ``env`` if given."""
    try:
        arrays, meta = load_checkpoint(checkpoint)
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {checkpoint}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise CheckpointMismatch(f"{checkpoint} is not a usable checkpoint: {exc}") from exc
    if env is not None and (meta["obs_dim"], meta["n_actions"]) != (env.observation_size, env.n_actions):
        raise CheckpointMismatch(
            f"checkpoint expects observation {meta['obs_dim']} / actions {meta['n_actions']}, "
            f"case provides {env.observation_size} / {env.n_actions}"
        )
    agent = make_agent(meta["algorithm"], meta["obs_dim"], meta["n_actions"], meta["agent_config"], seed=0)
    try:
        agent.load_state_dict(arrays)
    except (KeyError, ValueError) as exc:
        raise CheckpointMismatch(f"checkpoint arrays do not fit the agent: {exc}") from exc
    return agent, meta


def evaluate_policy(checkpoint, case_path, episodes: int, env_config: EnvConfig | None = None) -> dict:
    """Greedy rollouts of a saved agent; parameters are never updated."""
    if episodes < 1:
        raise ConfigError("episodes must be at least 1")
    env = TransmissionSwitchingEnv(load_case(case_path), env_config)
    agent, meta = load_agent(checkpoint, env)
    report = summarize(rollout_episodes(env, lambda obs: agent.select_action(obs, greedy=True), episodes))
    report["algorithm"] = meta["algorithm"]
    return report
