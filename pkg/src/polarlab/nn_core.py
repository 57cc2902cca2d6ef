"""Small dense-network engine with hand-written reverse-mode gradients.

Only what the neural decoder needs: affine layers with ReLU / Tanh / Sigmoid /
identity activations, the real-valued re-encoder and its gradient, the
self-supervised loss, binary cross-entropy for the supervised baseline, Adam
and a cosine one-cycle learning-rate schedule.  Tensors are plain 2-D numpy
arrays laid out as (batch, features).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


# ---------------------------------------------------------------------------
# model

@dataclass
class MlpModel:
    dims: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ValidationError("an MLP needs at least input and output dims")
        n_layers = len(self.dims) - 1
        if len(self.activations) != n_layers or len(self.weights) != n_layers \
                or len(self.biases) != n_layers:
            raise ValidationError("per-layer lists must have len(dims) - 1 entries")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValidationError(f"unknown activation {act!r}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.dims[l], self.dims[l + 1]) or b.shape != (self.dims[l + 1],):
                raise ValidationError(f"layer {l} parameter shapes do not chain")

    @property
    def params(self) -> list[np.ndarray]:
        """Weights and biases interleaved: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.dims), list(self.activations),
                        [W.copy() for W in self.weights], [b.copy() for b in self.biases])


def init_mlp(dims, activations, rng: np.random.Generator, dtype=np.float64) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(list(dims), list(activations), weights, biases)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]      # input to each layer
    pre: list[np.ndarray]         # pre-activation of each layer
    post: list[np.ndarray]        # post-activation of each layer
    model_id: int
    version: int


def mlp_forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValidationError(f"input shape {x.shape} does not match input dim {model.dims[0]}")
    inputs, pre, post = [], [], []
    a = x
    for W, b, act in zip(model.weights, model.biases, model.activations):
        inputs.append(a)
        z = a @ W + b
        a = _activate(z, act)
        pre.append(z)
        post.append(a)
    return a, ForwardCache(inputs, pre, post, id(model), model.version)


def mlp_backward(model: MlpModel, cache: ForwardCache, output_grad: np.ndarray,
                 grad_wrt_last_preactivation: bool = False):
    """Backpropagate ``output_grad`` through the network.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` follows the
    ``model.params`` order.  With ``grad_wrt_last_preactivation`` the incoming
    gradient is taken to be with respect to the final layer's pre-activation
    (used by the logistic + cross-entropy head).
    """
    if cache.model_id != id(model) or cache.version != model.version:
        raise ValidationError("forward cache does not belong to the current model state")
    g = np.asarray(output_grad)
    if g.shape != cache.post[-1].shape:
        raise ValidationError(f"output gradient shape {g.shape} != {cache.post[-1].shape}")
    n_layers = len(model.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)  # type: ignore[list-item]
    for l in range(n_layers - 1, -1, -1):
        act = model.activations[l]
        if l == n_layers - 1 and grad_wrt_last_preactivation:
            dz = g
        elif act == "relu":
            dz = g * (cache.pre[l] > 0)
        elif act == "tanh":
            dz = g * (1.0 - cache.post[l] ** 2)
        elif act == "sigmoid":
            dz = g * cache.post[l] * (1.0 - cache.post[l])
        else:
            dz = g
        grads[2 * l] = cache.inputs[l].T @ dz
        grads[2 * l + 1] = dz.sum(axis=0)
        g = dz @ model.weights[l].T
    return grads, g


# ---------------------------------------------------------------------------
# differentiable re-encoder

def _generator(code_or_matrix) -> np.ndarray:
    G = getattr(code_or_matrix, "G_A", code_or_matrix)
    return np.asarray(G).astype(bool)


def reencode_real(v: np.ndarray, code) -> np.ndarray:
    """Real-valued re-encoding: ``r_j = prod_{i : G_A[i, j] = 1} v_i``.

    Each entry of ``v`` is spread over the columns where its generator row has
    a one, the remaining entries are set to one, and columns are multiplied
    out.  For ``v`` in ``{+1, -1}`` this is exactly BPSK of the GF(2)
    encoding.
    """
    G = _generator(code)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != G.shape[0]:
        raise ValidationError(f"v shape {v.shape} does not match K={G.shape[0]}")
    spread = np.where(G[None, :, :], v[:, :, None], 1.0)
    return spread.prod(axis=1)


def reencode_backward(v: np.ndarray, code, r_grad: np.ndarray) -> np.ndarray:
    """Gradient of ``reencode_real`` w.r.t. ``v`` given ``dL/dr``.

    Leave-one-out column products come from exclusive prefix and suffix
    products, so zero entries in ``v`` are handled without division.
    """
    G = _generator(code)
    v = np.asarray(v, dtype=np.float64)
    r_grad = np.asarray(r_grad, dtype=np.float64)
    B, K = v.shape
    if r_grad.shape != (B, G.shape[1]):
        raise ValidationError(f"r_grad shape {r_grad.shape} != {(B, G.shape[1])}")
    spread = np.where(G[None, :, :], v[:, :, None], 1.0)
    ones = np.ones((B, 1, G.shape[1]))
    prefix = np.cumprod(np.concatenate([ones, spread[:, :-1, :]], axis=1), axis=1)
    suffix = np.cumprod(np.concatenate([ones, spread[:, :0:-1, :]], axis=1), axis=1)[:, ::-1, :]
    loo = prefix * suffix * G[None, :, :]
    return np.einsum("bkn,bn->bk", loo, r_grad)


# ---------------------------------------------------------------------------
# losses

def selfsup_loss(v: np.ndarray, y: np.ndarray, code, w: float = 0.01, eps: float = 1e-6):
    """Label-free loss and its gradient w.r.t. ``v``.

    ``mean_batch[ mean_j (r_j - y_j)^2 + w * mean_i 1/(|v_i| + eps) ]`` with
    ``r = reencode_real(v)``.  The regularizer keeps ``v`` away from zero.
    """
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = reencode_real(v, code)
    if y.shape != r.shape:
        raise ValidationError(f"y shape {y.shape} != re-encoded shape {r.shape}")
    B, N = r.shape
    K = v.shape[1]
    diff = r - y
    inv = 1.0 / (np.abs(v) + eps)
    loss = float(np.mean(diff**2) + w * np.mean(inv))
    v_grad = reencode_backward(v, code, 2.0 * diff / (B * N))
    v_grad -= w * np.sign(v) * inv**2 / (B * K)
    return loss, v_grad


def regularizer_mean(v: np.ndarray, eps: float = 1e-6) -> float:
    """``d loss / d w`` of ``selfsup_loss``; always positive."""
    return float(np.mean(1.0 / (np.abs(v) + eps)))


def bce_with_logits(z: np.ndarray, target: np.ndarray):
    """Mean binary cross-entropy of ``sigmoid(z)`` against 0/1 targets.

    Returns the loss and its gradient w.r.t. the logits ``z``.
    """
    z = np.asarray(z, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    loss = float(np.mean(np.logaddexp(0.0, z) - t * z))
    return loss, (sigmoid(z) - t) / z.size


def softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


# ---------------------------------------------------------------------------
# optimisation

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float):
    """One in-place Adam update with bias correction; returns ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValidationError("params, grads and optimizer state must align")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


@dataclass(frozen=True)
class OneCycleSchedule:
    max_lr: float = 1e-3
    total_steps: int = 1
    warmup: float = 0.3
    div_initial: float = 25.0
    div_final: float = 1e4

    def __post_init__(self):
        if not 0.0 < self.warmup < 1.0:
            raise ValidationError(f"warmup fraction must be in (0, 1), got {self.warmup}")
        if self.total_steps < 1 or self.max_lr <= 0:
            raise ValidationError("need total_steps >= 1 and max_lr > 0")


def onecycle_lr(schedule: OneCycleSchedule, step: float) -> float:
    """Cosine one-cycle: warm up to ``max_lr`` then anneal to ``max_lr/div_final``."""
    s = schedule
    if not 0 <= step <= s.total_steps:
        raise ValidationError(f"step {step} outside [0, {s.total_steps}]")
    start = s.max_lr / s.div_initial
    end = s.max_lr / s.div_final
    peak = s.warmup * s.total_steps
    if step <= peak:
        lo, hi, frac = start, s.max_lr, step / peak
    else:
        lo, hi, frac = s.max_lr, end, (step - peak) / (s.total_steps - peak)
    return hi + (lo - hi) * (1.0 + math.cos(math.pi * frac)) / 2.0
