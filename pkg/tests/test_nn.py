import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridswitch.errors import ShapeMismatch, StaleCache
from gridswitch.nn import (
    MLP,
    Adam,
    DuelingQNetwork,
    PolicyNetwork,
    load_checkpoint,
    log_softmax,
    save_checkpoint,
    soft_update,
)


def naive_forward(params, names, x):
    h = np.array(x, dtype=float)
    for i, name in enumerate(names):
        w, b = params[name + ".weight"], params[name + ".bias"]
        h = np.array([sum(w[o, j] * h[j] for j in range(len(h))) + b[o] for o in range(len(b))])
        if i < len(names) - 1:
            h = np.where(h > 0, h, 0.0)
    return h


def finite_difference(net, loss_of_output, x, h=1e-5):
    grads = {}
    for k, p in net.params.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = loss_of_output(net, x)
            p[idx] = old - h
            down = loss_of_output(net, x)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[k] = g
    return grads


def rel_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b)))


def test_zero_weights_output_bias():
    net = MLP(3, 2, (4,), rng=0)
    for k in net.params:
        net.params[k][...] = 0
    net.params["out.bias"][:] = [1.5, -2]
    out, _ = net.forward(np.ones(3))
    np.testing.assert_array_equal(out, [1.5, -2])


def test_one_by_one_net():
    net = MLP(1, 1, (1,), rng=0)
    net.params.update({"trunk.0.weight": np.array([[2.0]]), "trunk.0.bias": np.zeros(1),
                       "out.weight": np.array([[1.0]]), "out.bias": np.zeros(1)})
    out, cache = net.forward([3.0])
    assert out[0] == 6.0
    grads = net.backward(cache, [1.0])
    assert grads["out.weight"][0, 0] == 6.0 and grads["out.bias"][0] == 1.0
    assert grads["trunk.0.weight"][0, 0] == 3.0 and grads["trunk.0.bias"][0] == 1.0


def test_forward_matches_naive_oracle():
    net = MLP(4, 3, (256, 256), rng=1)
    x = np.random.default_rng(2).normal(size=4)
    out, _ = net.forward(x)
    expected = naive_forward(net.params, ["trunk.0", "trunk.1", "out"], x)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_input_shape_checked():
    with pytest.raises(ShapeMismatch):
        MLP(4, 2, rng=0).forward(np.ones(5))


def test_stale_cache_detected():
    net = MLP(4, 2, (8,), rng=0)
    _, cache = net.forward(np.ones((3, 4)))
    with pytest.raises(StaleCache):
        net.backward(cache, np.ones((2, 2)))


def test_dueling_composition():
    net = DuelingQNetwork(2, 3, (4,), rng=0)
    for k in net.params:
        net.params[k][...] = 0
    net.params["value.bias"][:] = 1.0
    net.params["advantage.bias"][:] = [2, 0, -2]
    q, _ = net.forward(np.zeros(2))
    np.testing.assert_array_equal(q, [3, 1, -1])
    net.params["value.bias"][:] = 5.0
    net.params["advantage.bias"][:] = 7.3
    q, _ = net.forward(np.zeros(2))
    np.testing.assert_allclose(q, [5, 5, 5], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dueling_mean_advantage_identity(seed):
    rng = np.random.default_rng(seed)
    net = DuelingQNetwork(5, 4, (16, 16), rng=rng)
    x = rng.normal(size=(3, 5)) * 10
    q, cache = net.forward(x)
    np.testing.assert_allclose(q.mean(axis=1), cache["value"], atol=1e-9)


def test_policy_uniform_and_stable():
    logits = np.array([[0.0, 0.0, 0.0], [1000.0, 0.0, -1000.0]])
    logp = log_softmax(logits)
    np.testing.assert_allclose(np.exp(logp[0]), 1 / 3)
    assert np.all(np.isfinite(logp))
    np.testing.assert_allclose(np.exp(logp[1]), [1, 0, 0], atol=1e-300)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_softmax_properties(seed, shift):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(4, 6)) * 5
    logp = log_softmax(logits)
    p = np.exp(logp)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.exp(log_softmax(logits + shift)), p, atol=1e-12)


def test_policy_network_outputs():
    net = PolicyNetwork(3, 5, (8,), rng=0)
    probs, logp, _ = net.forward(np.ones(3))
    assert probs.shape == (5,)
    np.testing.assert_allclose(np.exp(logp), probs, atol=1e-10)


@pytest.mark.parametrize("kind", ["mlp", "dueling", "policy"])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3))
    weights = rng.normal(size=(2, 4))
    if kind == "mlp":
        net = MLP(3, 4, (5, 5), rng=rng)
        out = lambda n, x: n.forward(x)[0]
    elif kind == "dueling":
        net = DuelingQNetwork(3, 4, (5, 5), rng=rng)
        out = lambda n, x: n.forward(x)[0]
    else:
        net = PolicyNetwork(3, 4, (5, 5), rng=rng)
        out = lambda n, x: n.forward(x)[2]["logits"]
    loss = lambda n, x: float(np.sum(weights * np.sin(out(n, x))))
    y = out(net, x)
    cache = net.forward(x)[-1]
    analytic = net.backward(cache, weights * np.cos(y))
    numeric = finite_difference(net, loss, x)
    for k in net.params:
        assert rel_error(analytic[k], numeric[k]) < 1e-4, k


def test_zero_output_gradient():
    net = MLP(3, 2, (4,), rng=0)
    _, cache = net.forward(np.ones(3))
    assert all(not np.any(g) for g in net.backward(cache, np.zeros(2)).values())


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    Adam(params, lr=0.1).step(params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_first_step_sign():
    params = {"w": np.array([0.0, 0.0])}
    Adam(params, lr=1e-3).step(params, {"w": np.array([5.0, -0.01])})
    np.testing.assert_allclose(params["w"], [-1e-3, 1e-3], rtol=1e-4)


def test_adam_descends_quadratic():
    params = {"w": np.array(1.0)}
    opt = Adam(params, lr=0.1)
    for _ in range(100):
        opt.step(params, {"w": 2 * params["w"]})
    assert abs(params["w"]) < 0.5


def test_adam_shape_checked():
    params = {"w": np.zeros(2)}
    with pytest.raises(ShapeMismatch):
        Adam(params).step(params, {"w": np.zeros(3)})


def test_soft_update():
    a, b = MLP(2, 1, (2,), rng=0), MLP(2, 1, (2,), rng=1)
    for k in a.params:
        a.params[k][...] = 1.0
        b.params[k][...] = 0.0
    soft_update(b, a, 0.005)
    assert all(np.all(v == 0.005) for v in b.params.values())


def test_same_seed_same_init():
    a, b = DuelingQNetwork(4, 3, rng=9), DuelingQNetwork(4, 3, rng=9)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_checkpoint_round_trip(tmp_path):
    net = PolicyNetwork(3, 2, (4,), rng=0)
    opt = Adam(net.params)
    opt.step(net.params, {k: np.ones_like(v) for k, v in net.params.items()})
    arrays = {**net.params, **opt.state_dict("opt")}
    save_checkpoint(tmp_path / "c.npz", arrays, {"note": "x"})
    loaded, meta = load_checkpoint(tmp_path / "c.npz")
    assert meta["note"] == "x" and meta["format"] == 1
    assert loaded.keys() == arrays.keys()
    for k in arrays:
        assert np.array_equal(loaded[k], arrays[k]) and loaded[k].dtype == np.asarray(arrays[k]).dtype
