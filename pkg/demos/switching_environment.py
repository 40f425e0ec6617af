"""
Stepping the transmission-switching environment
================================================

Each action toggles one line (0 is a no-op).  The reward is minus a
weighted sum of cost change, voltage violation, overload, losses and
open lines; islanding ends the episode with a fixed penalty.
"""
import numpy as np

from gridswitch import EnvConfig, TransmissionSwitchingEnv, load_case

env = TransmissionSwitchingEnv(load_case("case14"), EnvConfig(horizon=5))
obs = env.reset()
print("observation length", obs.shape[0], "| actions", env.n_actions)

for action in (0, 3, 3, 14):
    result = env.step(action)
    b = result.breakdown
    print(f"action {action:>2}: reward {result.reward:9.3f}  cost {b.cost_term:7.3f}  "
          f"voltage {b.voltage_term:6.3f}  losses {b.loss_term:6.3f}  open {b.open_lines_term:5.3f}  "
          f"penalty {b.penalty_applied}  done {result.done}")
    if result.done:
        break

# a purely random policy hits the islanding penalty most of the time
rng = np.random.default_rng(0)
returns = []
for _ in range(200):
    env.reset()
    total, done = 0.0, False
    while not done:
        r = env.step(int(rng.integers(env.n_actions)))
        total += r.reward
        done = r.done
    returns.append(total)
print(f"random policy mean return over 200 episodes: {np.mean(returns):.1f}")
