"""Small dense networks in float64 with hand-written backward passes.

Parameters live in a flat ``name -> ndarray`` dict, with weights stored as
``(out, in)``.  Forward passes accept a single vector or a batch of row
vectors.  They return a cache, and ``backward`` turns that cache plus an
output gradient into a gradient dict shaped like ``params``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, StaleCache

CHECKPOINT_FORMAT = 1


def init_linear(rng: np.random.Generator, n_in: int, n_out: int):
    bound = 1.0 / np.sqrt(n_in)
    weight = rng.uniform(-bound, bound, size=(n_out, n_in))
    bias = rng.uniform(-bound, bound, size=n_out)
    return weight, bias


def _as_batch(x, n_in):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_in:
        raise ShapeMismatch(f"expected input width {n_in}, got shape {x.shape}")
    return x, single


def _linear(params, name, x):
    return x @ params[name + ".weight"].T + params[name + ".bias"]


def _linear_backward(params, name, x, g, grads):
    grads[name + ".weight"] = g.T @ x
    grads[name + ".bias"] = g.sum(axis=0)
    return g @ params[name + ".weight"]


class Network:
    """A ReLU trunk followed by one or more linear heads."""

    heads: tuple[str, ...] = ()

    def __init__(self, n_in: int, head_sizes: dict[str, int], hidden=(256, 256), rng=None):
        rng = np.random.default_rng(rng)
        self.n_in = n_in
        self.hidden = tuple(hidden)
        self.trunk = tuple(f"trunk.{i}" for i in range(len(self.hidden)))
        self.params: dict[str, np.ndarray] = {}
        width = n_in
        for name, h in zip(self.trunk, self.hidden):
            self.params[name + ".weight"], self.params[name + ".bias"] = init_linear(rng, width, h)
            width = h
        for name, size in head_sizes.items():
            self.params[name + ".weight"], self.params[name + ".bias"] = init_linear(rng, width, size)

    def copy(self):
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def load_params(self, params) -> None:
        for k, v in params.items():
            if k not in self.params or self.params[k].shape != np.shape(v):
                raise ShapeMismatch(f"parameter {k} does not fit this network")
        for k in self.params:
            self.params[k] = np.array(params[k], dtype=float)

    def _trunk_forward(self, x):
        cache = []
        h = x
        for name in self.trunk:
            pre = _linear(self.params, name, h)
            cache.append((h, pre))
            h = np.maximum(pre, 0.0)
        return h, cache

    def _trunk_backward(self, cache, g, grads):
        for name, (inp, pre) in zip(reversed(self.trunk), reversed(cache)):
            g = _linear_backward(self.params, name, inp, g * (pre > 0), grads)
        return g

    @staticmethod
    def _check_grad(cache, grad, width):
        grad = np.asarray(grad, dtype=float)
        if cache["single"]:
            grad = grad[None, :] if grad.ndim == 1 else grad
        if grad.shape != (cache["batch"], width):
            raise StaleCache(f"output gradient {grad.shape} does not match cached forward pass")
        return grad


class MLP(Network):
    """Plain multilayer perceptron, ``n_in -> hidden... -> n_out``."""

    def __init__(self, n_in: int, n_out: int, hidden=(256, 256), rng=None):
        super().__init__(n_in, {"out": n_out}, hidden, rng)
        self.n_out = n_out

    def forward(self, x):
        x, single = _as_batch(x, self.n_in)
        h, trunk = self._trunk_forward(x)
        out = _linear(self.params, "out", h)
        cache = {"trunk": trunk, "h": h, "single": single, "batch": len(x)}
        return (out[0] if single else out), cache

    def backward(self, cache, grad_out):
        g = self._check_grad(cache, grad_out, self.n_out)
        grads = {}
        g = _linear_backward(self.params, "out", cache["h"], g, grads)
        self._trunk_backward(cache["trunk"], g, grads)
        return grads


class DuelingQNetwork(Network):
    """Q(s, a) = V(s) + A(s, a) - mean over actions of A(s, .)."""

    def __init__(self, n_in: int, n_actions: int, hidden=(256, 256), rng=None):
        super().__init__(n_in, {"value": 1, "advantage": n_actions}, hidden, rng)
        self.n_actions = n_actions

    def forward(self, x):
        x, single = _as_batch(x, self.n_in)
        h, trunk = self._trunk_forward(x)
        value = _linear(self.params, "value", h)
        adv = _linear(self.params, "advantage", h)
        q = value + (adv - adv.mean(axis=1, keepdims=True))
        cache = {
            "trunk": trunk, "h": h, "single": single, "batch": len(x),
            "value": value[:, 0], "advantage": adv,
        }
        return (q[0] if single else q), cache

    def backward(self, cache, grad_q):
        g = self._check_grad(cache, grad_q, self.n_actions)
        grads = {}
        g_value = g.sum(axis=1, keepdims=True)
        g_adv = g - g.mean(axis=1, keepdims=True)
        h = cache["h"]
        g_h = _linear_backward(self.params, "value", h, g_value, grads)
        g_h = g_h + _linear_backward(self.params, "advantage", h, g_adv, grads)
        self._trunk_backward(cache["trunk"], g_h, grads)
        return grads


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class PolicyNetwork(Network):
    """Categorical policy over discrete actions."""

    def __init__(self, n_in: int, n_actions: int, hidden=(256, 256), rng=None):
        super().__init__(n_in, {"logits": n_actions}, hidden, rng)
        self.n_actions = n_actions

    def forward(self, x):
        """Returns ``(probabilities, log_probabilities, cache)``."""
        x, single = _as_batch(x, self.n_in)
        h, trunk = self._trunk_forward(x)
        logits = _linear(self.params, "logits", h)
        logp = log_softmax(logits)
        probs = np.exp(logp)
        cache = {"trunk": trunk, "h": h, "single": single, "batch": len(x), "logits": logits}
        if single:
            return probs[0], logp[0], cache
        return probs, logp, cache

    def backward(self, cache, grad_logits):
        g = self._check_grad(cache, grad_logits, self.n_actions)
        grads = {}
        g = _linear_backward(self.params, "logits", cache["h"], g, grads)
        self._trunk_backward(cache["trunk"], g, grads)
        return grads


def soft_update(target: Network, source: Network, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, in place.

    Written as ``target += tau * (source - target)`` so equal parameters stay
    bit-identical.
    """
    for k, p in source.params.items():
        t = target.params[k]
        t += tau * (p - t)


class Adam:
    """Bias-corrected adaptive-moment optimizer updating a params dict in place."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads) -> None:
        for k, g in grads.items():
            if k not in self.m or np.shape(g) != self.m[k].shape:
                raise ShapeMismatch(f"gradient {k} does not match optimizer state")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / c1
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            denom = np.array(v / c2)
            np.sqrt(denom, out=denom)
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= step_size
            params[k] -= denom

    def state_dict(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.m.{k}": v for k, v in self.m.items()}
        out.update({f"{prefix}.v.{k}": v for k, v in self.v.items()})
        out[f"{prefix}.t"] = np.array(self.t)
        return out

    def load_state_dict(self, arrays, prefix: str) -> None:
        for k in self.m:
            self.m[k] = np.array(arrays[f"{prefix}.m.{k}"], dtype=float)
            self.v[k] = np.array(arrays[f"{prefix}.v.{k}"], dtype=float)
        self.t = int(arrays[f"{prefix}.t"])


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    """Write named arrays plus a JSON metadata record to an ``.npz`` container."""
    path = Path(path)
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.array(json.dumps({"format": CHECKPOINT_FORMAT, **meta}, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(arrays, meta)``."""
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
        meta = json.loads(str(data["__meta__"]))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
    return arrays, meta
