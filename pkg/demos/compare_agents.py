"""
DDSAC against the DDQN and PPO baselines
========================================

Ten seeds per algorithm on the 14-bus case, aggregated to per-episode mean
and standard error.  The CSVs land in ``results/comparison/<algo>/``; the
curves are meant for qualitative comparison, not as a benchmark.

    python3 demos/compare_agents.py [episodes] [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from gridswitch.harness import RunConfig, read_metrics, run_multi_seed

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 200
out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(__file__).resolve().parent.parent / "results" / "comparison"
seeds = list(range(10))

for algo in ("ddsac", "ddqn", "ppo"):
    run_multi_seed(RunConfig(case_path="case14", algorithm=algo, episodes=episodes, seeds=seeds,
                             out_dir=str(out)))
    finals = [np.mean([r.cumulative_reward for r in read_metrics(out / algo / f"seed_{s}" / "metrics.csv")[-20:]])
              for s in seeds]
    print(f"{algo:>5}: final-20-episode reward {np.mean(finals):9.1f} +/- {np.std(finals, ddof=1) / np.sqrt(len(seeds)):.1f}")
