import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridswitch.agents.common import Batch, ReplayBuffer, RunningNorm, Transition, sample_action
from gridswitch.agents.ddsac import DdsacAgent, DdsacConfig, soft_q_targets, target_entropy
from gridswitch.environment import TransmissionSwitchingEnv
from gridswitch.errors import InvalidDim

SMALL = DdsacConfig(hidden=(8, 8), batch_size=4)


def batch_of(rng, n=6, obs=3, actions=2, dones=None):
    return Batch(
        rng.normal(size=(n, obs)), rng.integers(0, actions, n), rng.normal(size=n),
        rng.normal(size=(n, obs)), np.zeros(n) if dones is None else np.asarray(dones, float),
    )


def flatten_heads(net, value=None):
    """Zero the trunk-to-head weights so the head biases alone set the output."""
    for k in net.params:
        if not k.startswith("trunk"):
            net.params[k][...] = 0.0
    return net


def test_target_entropy_values():
    assert target_entropy(2) == pytest.approx(0.25 * np.log(2))
    assert target_entropy(187) == pytest.approx(0.25 * np.log(187))
    with pytest.raises(InvalidDim):
        target_entropy(1)


def test_soft_target_hand_example():
    y = soft_q_targets(
        np.array([1.0, 1.0]), np.array([0.0, 1.0]),
        np.full((2, 2), 0.5), np.log(np.full((2, 2), 0.5)),
        np.array([[1.0, 3.0]] * 2), np.array([[2.0, 4.0]] * 2), alpha=0.0, gamma=0.99,
    )
    assert y[0] == pytest.approx(2.98, abs=1e-10)
    assert y[1] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_soft_target_matches_enumeration(seed, alpha):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet([1, 1], size=3)
    q1, q2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    r, d = rng.normal(size=3), np.zeros(3)
    y = soft_q_targets(r, d, p, np.log(p), q1, q2, alpha, 0.9)
    for i in range(3):
        v = sum(p[i, a] * (min(q1[i, a], q2[i, a]) - alpha * np.log(p[i, a])) for a in range(2))
        assert y[i] == pytest.approx(r[i] + 0.9 * v, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_terminal_targets_ignore_next_state(seed):
    rng = np.random.default_rng(seed)
    agent = DdsacAgent(3, 2, SMALL, seed=0)
    batch = batch_of(rng, dones=np.ones(6))
    fuzzed = batch._replace(next_states=rng.normal(size=(6, 3)) * 100)
    np.testing.assert_array_equal(agent.compute_targets(batch), agent.compute_targets(fuzzed))
    np.testing.assert_array_equal(agent.compute_targets(batch), batch.rewards)


def test_critic_symmetry():
    rng = np.random.default_rng(0)
    agent = DdsacAgent(3, 2, SMALL, seed=1)
    batch = batch_of(rng)
    y, loss = agent.compute_targets(batch), agent.policy_terms(batch)["policy_loss"]
    agent.q1, agent.q2 = agent.q2, agent.q1
    agent.q1_target, agent.q2_target = agent.q2_target, agent.q1_target
    np.testing.assert_array_equal(agent.compute_targets(batch), y)
    assert agent.policy_terms(batch)["policy_loss"] == loss


def test_single_sample_critic_loss():
    agent = DdsacAgent(2, 2, DdsacConfig(hidden=(3,)), seed=0)
    x = np.array([[0.5, -1.0]])
    batch = Batch(x, np.array([1]), np.array([2.0]), x, np.array([1.0]))
    q1 = agent.q1.forward(x)[0][0, 1]
    q2 = agent.q2.forward(x)[0][0, 1]
    l1, l2 = agent.update_critics(batch)
    assert l1 == pytest.approx((q1 - 2.0) ** 2, abs=1e-10)
    assert l2 == pytest.approx((q2 - 2.0) ** 2, abs=1e-10)
    assert l1 >= 0 and l2 >= 0


def test_uniform_policy_equal_q_is_stationary():
    agent = DdsacAgent(3, 4, SMALL, seed=0)
    for net in (agent.policy, agent.q1, agent.q2):
        flatten_heads(net)
    terms = agent.policy_terms(batch_of(np.random.default_rng(1), actions=4))
    np.testing.assert_allclose(terms["grad_logits"], 0.0, atol=1e-15)


def test_alpha_gradient_vanishes_at_target_entropy():
    agent = DdsacAgent(3, 2, SMALL, seed=0)
    flatten_heads(agent.policy)
    # choose logits whose entropy is exactly the target
    from scipy.optimize import brentq

    h = lambda z: -(1 / (1 + np.exp(-z))) * np.log(1 / (1 + np.exp(-z))) - (1 / (1 + np.exp(z))) * np.log(1 / (1 + np.exp(z)))
    z = brentq(lambda z: h(z) - agent.target_entropy, 0, 20)
    agent.policy.params["logits.bias"][:] = [z, 0]
    before = float(agent.alpha_params["log_alpha"])
    stats = agent.update_policy_and_temperature(batch_of(np.random.default_rng(0)))
    assert stats["alpha_loss"] == pytest.approx(0.0, abs=1e-12)
    assert float(agent.alpha_params["log_alpha"]) == pytest.approx(before, abs=1e-12)


def test_policy_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    agent = DdsacAgent(3, 3, DdsacConfig(hidden=(4,)), seed=2)
    agent.alpha_params["log_alpha"] = np.array(np.log(0.3))
    batch = batch_of(rng, actions=3)
    terms = agent.policy_terms(batch)
    analytic = agent.policy.backward(terms["cache"], terms["grad_logits"])
    eps = 1e-6
    for k, p in agent.policy.params.items():
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = agent.policy_terms(batch)["policy_loss"]
            flat[i] = old - eps
            down = agent.policy_terms(batch)["policy_loss"]
            flat[i] = old
            numeric = (up - down) / (2 * eps)
            assert analytic[k].reshape(-1)[i] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


def test_alpha_positive_after_updates():
    rng = np.random.default_rng(0)
    agent = DdsacAgent(3, 2, SMALL, seed=0)
    for _ in range(30):
        agent.update(batch_of(rng))
        assert agent.alpha > 0


def test_soft_update_drift_bound():
    rng = np.random.default_rng(0)
    agent = DdsacAgent(3, 2, SMALL, seed=0)
    agent.update(batch_of(rng))
    prev = {k: v.copy() for k, v in agent.q1_target.params.items()}
    agent.soft_update()
    for k, v in agent.q1_target.params.items():
        drift = np.max(np.abs(v - prev[k]))
        gap = np.max(np.abs(agent.q1.params[k] - prev[k]))
        assert drift <= 0.005 * gap + 1e-15


def test_soft_update_fixed_point():
    agent = DdsacAgent(3, 2, SMALL, seed=0)
    before = {k: v.copy() for k, v in agent.q1_target.params.items()}
    agent.soft_update()
    for k in before:
        np.testing.assert_array_equal(agent.q1_target.params[k], before[k])


def test_warmup_skips_updates(two_bus):
    env = TransmissionSwitchingEnv(two_bus)
    agent = DdsacAgent(env.observation_size, env.n_actions, DdsacConfig(hidden=(8,)), seed=0)
    agent.train_episode(env)
    assert agent.updates == 0 and len(agent.buffer) >= 1


def test_seeded_run_is_bit_identical(ring3):
    def run():
        env = TransmissionSwitchingEnv(ring3)
        agent = DdsacAgent(env.observation_size, env.n_actions, DdsacConfig(hidden=(16,), batch_size=8), seed=4)
        return [agent.train_episode(env, i) for i in range(6)]

    assert run() == run()


def test_state_dict_round_trip():
    rng = np.random.default_rng(0)
    a = DdsacAgent(3, 2, SMALL, seed=0)
    a.update(batch_of(rng))
    b = DdsacAgent(3, 2, SMALL, seed=99)
    b.load_state_dict(a.state_dict())
    batch = batch_of(rng)
    np.testing.assert_array_equal(a.compute_targets(batch), b.compute_targets(batch))
    sa, sb = a.update(batch), b.update(batch)
    assert sa == sb


def test_replay_buffer_ring():
    buf = ReplayBuffer(3, 2, rng=0)
    for i in range(5):
        buf.add(Transition(np.full(2, i), i % 2, float(i), np.full(2, i + 1), False))
    assert len(buf) == 3
    assert sorted(buf.rewards) == [2.0, 3.0, 4.0]
    assert buf.sample(7).states.shape == (7, 2)


def test_running_norm_matches_numpy():
    rng = np.random.default_rng(0)
    data = rng.normal(3, 2, size=(50, 4))
    norm = RunningNorm(4)
    for row in data:
        norm.update(row)
    np.testing.assert_allclose(norm.mean, data.mean(axis=0))
    np.testing.assert_allclose(norm.std, data.std(axis=0), rtol=1e-7)


def test_greedy_tie_break_lowest_index():
    assert sample_action([0.25, 0.5, 0.5 - 0.25, 0.5], np.random.default_rng(0), greedy=True) == 1


def test_temperature_tracks_target_when_actions_differ():
    """One action pays 1 and the other 0: the temperature falls until the
    policy's entropy settles near the target."""
    agent = DdsacAgent(4, 2, DdsacConfig(alpha_lr=1e-3), seed=0)
    s = np.ones(4)
    for _ in range(2000 + 31):
        a = agent.select_action(s)
        agent.buffer.add(Transition(s, a, 1.0 if a == 0 else 0.0, s, True))
        if len(agent.buffer) >= 32:
            agent.update(agent.buffer.sample(32))
    p = agent.action_probabilities(s)
    entropy = -np.sum(p * np.log(p))
    assert abs(entropy - agent.target_entropy) < 0.1
    assert p[0] > p[1]
