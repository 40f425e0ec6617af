"""
Training the discrete soft actor-critic on the 14-bus case
==========================================================

Two hundred episodes with the default settings, compared against a
uniform-random policy on the same environment.  Takes about half a
minute per seed on one core.
"""
import sys
import tempfile

import numpy as np

from gridswitch import TransmissionSwitchingEnv, load_case
from gridswitch.harness import RunConfig, evaluate_policy, random_policy_baseline, read_metrics, run_training

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = tempfile.mkdtemp(prefix="ddsac14_")
config = RunConfig(case_path="case14", algorithm="ddsac", episodes=200, seeds=[seed], out_dir=out)
rows = read_metrics(run_training(config, seed))

rewards = np.array([r.cumulative_reward for r in rows])
for start in range(0, 200, 40):
    chunk = rewards[start:start + 40]
    print(f"episodes {start:>3}-{start + 39}: mean reward {chunk.mean():9.1f}, "
          f"penalty episodes {sum(r.penalties for r in rows[start:start + 40])}")

baseline = random_policy_baseline(TransmissionSwitchingEnv(load_case("case14")), 2000, seed=1)
greedy = evaluate_policy(f"{out}/ddsac/seed_{seed}/checkpoint.npz", "case14", 5)
print(f"random policy {baseline['mean_cumulative_reward']:.1f} | "
      f"trained greedy policy {greedy['mean_cumulative_reward']:.1f}")
