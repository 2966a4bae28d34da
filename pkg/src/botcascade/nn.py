"""Small numpy neural-network substrate.

Holds the loss/activation formulas shared by both models, dense layers with
hand-written gradients, the Adam optimizer, a finite-difference gradient
checker, and the JSON weight format.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, MutableMapping, Optional, Tuple

import numpy as np

PROB_CLIP = 1e-12
LEAKY_SLOPE = 0.2
WEIGHTS_FORMAT = "botcascade-weights"
WEIGHTS_VERSION = 1

Params = MutableMapping[str, np.ndarray]


# -- formulas -----------------------------------------------------------------

def softmax(z) -> np.ndarray:
    """Softmax over the last axis, computed on max-shifted logits."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))[..., 0]


def cross_entropy_loss(y_true, p) -> float:
    """``-sum_k y_k log p_k`` with ``p`` clipped to [1e-12, 1]."""
    y = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs p {p.shape}")
    return float(-(y * np.log(np.clip(p, PROB_CLIP, 1.0))).sum())


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def expsum_activation(z):
    """Real-sample probability ``F / (F + 1)`` with ``F = sum_k exp(z_k)``.

    Equal to ``sigmoid(logsumexp(z))``, which is how it is evaluated so that
    large activations do not overflow.  Works on a vector or on rows.
    """
    s = logsumexp(z)
    out = sigmoid(np.atleast_1d(s))
    return float(out[0]) if np.ndim(s) == 0 else out


def binary_cross_entropy_from_logit(s, y):
    """Mean BCE of ``sigmoid(s)`` against targets ``y`` (stable form)."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(softplus(s) - y * s))


# -- layers -------------------------------------------------------------------

def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


ACTIVATIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sigmoid": sigmoid,
    "relu": lambda x: np.maximum(x, 0.0),
    "leaky_relu": _leaky,
    "tanh": np.tanh,
    "linear": lambda x: x,
}


def activation_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of activation ``name`` given its input and output."""
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "relu":
        return (pre > 0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(pre > 0, 1.0, LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - out * out
    if name == "linear":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {name!r}")


def dense_forward(x, weights, bias, activation: str = "linear") -> np.ndarray:
    """``act(x @ W + b)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.shape[1] != weights.shape[0] or bias.shape != (weights.shape[1],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {weights.shape}, b {bias.shape}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    return ACTIVATIONS[activation](x @ weights + bias)


def dense_backward(x, weights, pre, out, grad_out, activation: str):
    """Backprop through ``act(x @ W + b)``; returns (dx, dW, db)."""
    g = grad_out * activation_grad(activation, pre, out)
    return g @ weights.T, x.T @ g, g.sum(axis=0)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform weights with limit ``sqrt(6 / fan_in)``.

    Keeps enough signal through stacked sigmoid layers for the small
    learning rates both models use.
    """
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept units scaled by ``1 / (1 - rate)``."""
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def adam_update(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> Tuple[Params, AdamState]:
    """One bias-corrected Adam step, applied in place to ``params``.

    Only blocks present in ``grads`` are touched.  Raises
    ``FloatingPointError`` naming the first block with a non-finite gradient
    before modifying anything.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter block {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
    return params, state


# -- gradient check -------------------------------------------------------------

def grad_check(loss_fn: Callable[[Params], Tuple[float, Mapping[str, np.ndarray]]], params: Params,
               probe_count: int = 20, seed: int = 0, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, grads)`` with ``grads`` keyed like
    ``params``.  ``probe_count`` coordinates are drawn uniformly over all
    parameter entries.  The relative error of a probe is
    ``|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)``.
    """
    _, grads = loss_fn(params)
    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(int(sizes.sum()), size=min(probe_count, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for k in flat_idx:
        block = int(np.searchsorted(offsets, k, side="right") - 1)
        name = names[block]
        arr = params[name].reshape(-1)
        j = int(k - offsets[block])
        orig = arr[j]
        arr[j] = orig + h
        plus = loss_fn(params)[0]
        arr[j] = orig - h
        minus = loss_fn(params)[0]
        arr[j] = orig
        fd = (plus - minus) / (2.0 * h)
        ga = float(np.asarray(grads[name]).reshape(-1)[j])
        rel = abs(ga - fd) / max(1e-8, abs(ga) + abs(fd))
        worst = max(worst, rel)
    return worst


# -- serialization ------------------------------------------------------------

def weights_to_dict(blocks: Mapping[str, np.ndarray]) -> dict:
    return {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "blocks": [
            {"name": name, "shape": list(np.shape(arr)), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in sorted(blocks.items())
        ],
    }


def weights_from_dict(doc: dict, expected: Optional[Mapping[str, Tuple[int, ...]]] = None) -> Dict[str, np.ndarray]:
    """Parse a weight document, validating shapes against ``expected`` if given."""
    if doc.get("format") != WEIGHTS_FORMAT:
        raise ValueError("not a weight document")
    if doc.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weight format version {doc.get('version')!r}")
    out = {}
    for block in doc["blocks"]:
        shape = tuple(int(s) for s in block["shape"])
        data = np.asarray(block["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"block {block['name']}: {data.size} values for shape {shape}")
        out[block["name"]] = data.reshape(shape)
    if expected is not None:
        missing = set(expected) - set(out)
        if missing:
            raise ValueError(f"missing parameter blocks: {sorted(missing)}")
        for name, shape in expected.items():
            if out[name].shape != tuple(shape):
                raise ValueError(f"block {name}: shape {out[name].shape}, expected {tuple(shape)}")
    return out


def dumps_weights(blocks: Mapping[str, np.ndarray]) -> str:
    return json.dumps(weights_to_dict(blocks))
