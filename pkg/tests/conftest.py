from collections import deque

import numpy as np
import pytest

from gridswitch.case import load_case, parse_case

TWO_BUS = """
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0   0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 {load} 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 {load} 0 300 -300 1 100 1 250 0;
];
mpc.branch = [
    1 2 {r} 0.1 0 0 0 0 0 0 1 -360 360;
];
"""

THREE_BUS_RING = """
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0  0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;
    3 1 40 10 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 90 0 300 -300 1.0 100 1 250 0;
];
mpc.branch = [
    1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;
    2 3 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;
    3 1 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
    2 0 0 3 0.01 20 0;
];
"""


def two_bus_text(r=0.0, load_mw=100.0):
    return TWO_BUS.format(r=r, load=load_mw)


@pytest.fixture
def two_bus():
    return parse_case(two_bus_text())


@pytest.fixture
def ring3():
    return parse_case(THREE_BUS_RING)


@pytest.fixture(scope="session")
def case14():
    return load_case("case14")


@pytest.fixture(scope="session")
def case118():
    return load_case("case118")


def bfs_connected(case, status):
    """Brute-force oracle: every bus with load or live generation reachable from the slack."""
    a = case.arrays
    adj = [[] for _ in range(case.n_bus)]
    for k in range(case.n_branch):
        if status[k]:
            f, t = int(a.f_bus[k]), int(a.t_bus[k])
            adj[f].append(t)
            adj[t].append(f)
    seen = {case.slack_position}
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    needed = set(np.flatnonzero((a.p_load != 0) | (a.q_load != 0)))
    needed |= set(int(b) for b in a.gen_bus[a.gen_on])
    return needed <= seen


def pypower_voltages(name):
    """Voltage magnitudes from the pypower reference solver (Newton, no Q limits)."""
    from pypower import api

    ppc = getattr(api, name)()
    opt = api.ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-10, ENFORCE_Q_LIMS=0)
    result, success = api.runpf(ppc, opt)
    assert success
    return result["bus"][:, 7]


LEARNING_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def random_baseline_14(case14):
    """Random-policy Monte Carlo on the default 14-bus environment."""
    import time

    from gridswitch.environment import TransmissionSwitchingEnv
    from gridswitch.harness import random_policy_baseline

    start = time.perf_counter()
    report = random_policy_baseline(TransmissionSwitchingEnv(case14), 10_000, seed=12345)
    return report, time.perf_counter() - start


@pytest.fixture(scope="session")
def ddsac_runs_14(tmp_path_factory):
    """Default-configuration learner on the 14-bus case: 200 episodes for each of 5 seeds."""
    import time

    from gridswitch.harness import RunConfig, read_metrics, run_training

    out = tmp_path_factory.mktemp("ddsac14")
    config = RunConfig(case_path="case14", algorithm="ddsac", episodes=200,
                       seeds=list(LEARNING_SEEDS), out_dir=str(out))
    start = time.perf_counter()
    runs = {seed: read_metrics(run_training(config, seed)) for seed in LEARNING_SEEDS}
    return runs, out, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
