"""Neural polar decoder: model construction, training, decoding, checkpoints.

Two training schemes share the same MLP body:

* ``selfsup``: label-free.  The network output ``v`` is re-encoded through the
  generator matrix and compared with the channel output, so gradients only ever
  see ``(v, y, G_A, w)``.  Messages are random (or drawn from a fixed codebook
  subset) and each codeword gets its own Eb/N0 drawn uniformly in a dB range.
* ``baseline``: the conventional supervised decoder.  Every epoch passes the
  whole codebook (or the fixed subset) once at a fixed Eb/N0, with a logistic
  output head and binary cross-entropy against the true message bits.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import nn_core
from .channel import NoiseSpec, awgn, bpsk_modulate, ebn0_to_sigma, make_rng
from .codebook import CodeSpec, bits_to_int, encode, int_to_bits
from .errors import (CheckpointError, ConfigurationError, TrainingDivergedError,
                     ValidationError)
from .nn_core import (AdamState, MlpModel, OneCycleSchedule, adam_step, init_mlp,
                      mlp_backward, onecycle_lr, selfsup_loss, softplus)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (128, 64, 32)

# stream ids for make_rng, so training and init never share a sequence
_STREAM_INIT = 1
_STREAM_TRAIN = 2


@dataclass
class TrainConfig:
    scheme: str = "selfsup"
    epochs: int = 2**15
    batch_size: Optional[int] = None          # None -> 2^K
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    subset_percent: Optional[float] = None    # None -> uniform random messages
    subset_seed: int = 0
    noise: dict = field(default_factory=lambda: {"mode": "uniform_db", "lo": 0.0, "hi": 10.0})
    w: float = 0.01
    eps: float = 0.1        # with 1e-6 the 1/|v| barrier freezes output signs early in training
    learn_w: bool = False
    max_lr: float = 5e-3
    warmup: float = 0.3
    div_initial: float = 25.0
    div_final: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.scheme not in ("selfsup", "baseline"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.subset_percent is not None and not 0 < self.subset_percent <= 100:
            raise ValidationError("subset percent must be in (0, 100]")
        if not self.hidden:
            raise ValidationError("at least one hidden layer is required")
        if self.dtype not in ("float64", "float32"):
            raise ValidationError(f"unsupported dtype {self.dtype!r}")

    @classmethod
    def baseline_defaults(cls, **kw) -> "TrainConfig":
        base = dict(scheme="baseline", epochs=2**18,
                    noise={"mode": "fixed_db", "value": 1.0})
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Checkpoint:
    code: CodeSpec
    model: MlpModel
    train_config: dict
    final_epoch: int
    seed: int
    loss_trace: list[float]
    subset: Optional[list[int]] = None     # training messages as integers, if a subset was used
    w: Optional[float] = None
    version: int = CHECKPOINT_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "code": self.code.to_dict(),
            "dims": list(self.model.dims),
            "activations": list(self.model.activations),
            "weights": [W.tolist() for W in self.model.weights],
            "biases": [b.tolist() for b in self.model.biases],
            "train_config": self.train_config,
            "final_epoch": self.final_epoch,
            "seed": self.seed,
            "loss_trace": list(self.loss_trace),
            "subset": self.subset,
            "w": self.w,
        }


# ---------------------------------------------------------------------------
# message sources and label audit

def codebook_subset(K: int, percent: float, subset_seed: int) -> np.ndarray:
    """Fixed ``floor(percent/100 * 2^K)`` messages (as sorted integers)."""
    total = 2**K
    size = math.floor(percent / 100.0 * total)
    if size < 1:
        raise ConfigurationError(f"{percent}% of {total} messages is empty")
    rng = make_rng(subset_seed, 0x5B5E7)
    return np.sort(rng.permutation(total)[:size])


def complement(K: int, subset) -> np.ndarray:
    mask = np.ones(2**K, dtype=bool)
    mask[np.asarray(subset, dtype=np.int64)] = False
    return np.flatnonzero(mask)


class LabelAudit:
    """Counts reads of message bits that happen after they were encoded."""

    def __init__(self):
        self.encodes = 0
        self.post_encode_reads = 0


class GuardedMessages:
    """Message batch that may be encoded once; later reads are recorded."""

    def __init__(self, bits: np.ndarray, audit: LabelAudit):
        self._bits = bits
        self._audit = audit
        self._sealed = False

    def encode(self, code: CodeSpec) -> np.ndarray:
        x = encode(self._bits, code)
        self._sealed = True
        self._audit.encodes += 1
        return x

    @property
    def bits(self) -> np.ndarray:
        if self._sealed:
            self._audit.post_encode_reads += 1
        return self._bits


@dataclass
class TrainHooks:
    audit: LabelAudit = field(default_factory=LabelAudit)
    on_messages: Optional[Callable[[np.ndarray], None]] = None   # sees message ints before encoding
    on_epoch_end: Optional[Callable[[int, MlpModel], None]] = None
    samples_seen: int = 0


# ---------------------------------------------------------------------------
# model

def build_model(code: CodeSpec, hidden=DEFAULT_HIDDEN, seed: int = 0,
                output_activation: str = "tanh", dtype: str = "float64") -> MlpModel:
    hidden = list(hidden)
    if not hidden:
        raise ValidationError("at least one hidden layer is required")
    dims = [code.N, *hidden, code.K]
    acts = ["relu"] * len(hidden) + [output_activation]
    return init_mlp(dims, acts, make_rng(seed, _STREAM_INIT), dtype=np.dtype(dtype))


def _schedule(cfg: TrainConfig) -> OneCycleSchedule:
    return OneCycleSchedule(cfg.max_lr, cfg.epochs, cfg.warmup, cfg.div_initial, cfg.div_final)


def _check_finite(loss: float, epoch: int) -> None:
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}")


def train_selfsupervised(config: TrainConfig, code: CodeSpec,
                         hooks: Optional[TrainHooks] = None) -> Checkpoint:
    """Label-free training; returns a checkpoint with the per-epoch loss trace."""
    if config.scheme != "selfsup":
        raise ValidationError("train_selfsupervised needs scheme='selfsup'")
    hooks = hooks or TrainHooks()
    dtype = np.dtype(config.dtype)
    batch = config.batch_size or 2**code.K
    noise = NoiseSpec.from_dict(config.noise, code.rate)
    model = build_model(code, config.hidden, config.seed, "tanh", config.dtype)
    params = model.params
    omega = np.array([math.log(math.expm1(config.w))]) if config.learn_w else None
    state = AdamState.zeros_like(params + ([omega] if config.learn_w else []),
                                 beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    schedule = _schedule(config)
    rng = make_rng(config.seed, _STREAM_TRAIN)
    subset = (codebook_subset(code.K, config.subset_percent, config.subset_seed)
              if config.subset_percent is not None else None)

    trace: list[float] = []
    for epoch in range(config.epochs):
        if subset is None:
            msg_ints = rng.integers(0, 2**code.K, size=batch)
        else:
            msg_ints = subset[rng.integers(0, subset.size, size=batch)]
        if hooks.on_messages is not None:
            hooks.on_messages(msg_ints)
        msgs = GuardedMessages(int_to_bits(msg_ints, code.K), hooks.audit)
        y = _channel(msgs.encode(code), noise, rng)
        del msgs, msg_ints
        hooks.samples_seen += batch

        v, cache = nn_core.mlp_forward(model, y.astype(dtype, copy=False))
        w = softplus(omega[0]) if config.learn_w else config.w
        loss, v_grad = selfsup_loss(v, y, code, w, config.eps)
        _check_finite(loss, epoch)
        grads, _ = mlp_backward(model, cache, v_grad.astype(dtype, copy=False))
        if config.learn_w:
            dw = nn_core.regularizer_mean(v, config.eps)
            grads.append(np.array([dw / (1.0 + math.exp(-omega[0]))]))
            adam_step(params + [omega], grads, state, onecycle_lr(schedule, epoch))
        else:
            adam_step(params, grads, state, onecycle_lr(schedule, epoch))
        model.version += 1
        trace.append(loss)
        if hooks.on_epoch_end is not None:
            hooks.on_epoch_end(epoch, model)

    return Checkpoint(code, model, config.to_dict(), config.epochs, config.seed, trace,
                      subset=None if subset is None else subset.tolist(),
                      w=softplus(omega[0]) if config.learn_w else config.w)


def _channel(x: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    ebn0 = noise.draw_ebn0(rng, x.shape[0])
    sigma = ebn0_to_sigma(ebn0, noise.rate)[:, None]
    return awgn(bpsk_modulate(x), sigma, rng)


def train_supervised_baseline(config: TrainConfig, code: CodeSpec,
                              hooks: Optional[TrainHooks] = None) -> Checkpoint:
    """Conventional supervised decoder: one pass over the training messages per epoch."""
    if config.scheme != "baseline":
        raise ValidationError("train_supervised_baseline needs scheme='baseline'")
    hooks = hooks or TrainHooks()
    dtype = np.dtype(config.dtype)
    noise = NoiseSpec.from_dict(config.noise, code.rate)
    model = build_model(code, config.hidden, config.seed, "sigmoid", config.dtype)
    params = model.params
    state = AdamState.zeros_like(params, beta1=config.beta1, beta2=config.beta2,
                                 eps=config.adam_eps)
    schedule = _schedule(config)
    rng = make_rng(config.seed, _STREAM_TRAIN)
    if config.subset_percent is not None:
        train_ints = codebook_subset(code.K, config.subset_percent, config.subset_seed)
    else:
        train_ints = np.arange(2**code.K)
    labels = int_to_bits(train_ints, code.K).astype(np.float64)
    codewords = encode(labels.astype(np.uint8), code)

    trace: list[float] = []
    for epoch in range(config.epochs):
        if hooks.on_messages is not None:
            hooks.on_messages(train_ints)
        y = _channel(codewords, noise, rng)
        hooks.samples_seen += len(train_ints)
        p, cache = nn_core.mlp_forward(model, y.astype(dtype, copy=False))
        loss, z_grad = nn_core.bce_with_logits(cache.pre[-1], labels)
        _check_finite(loss, epoch)
        grads, _ = mlp_backward(model, cache, z_grad.astype(dtype, copy=False),
                                grad_wrt_last_preactivation=True)
        adam_step(params, grads, state, onecycle_lr(schedule, epoch))
        model.version += 1
        trace.append(loss)

    return Checkpoint(code, model, config.to_dict(), config.epochs, config.seed, trace,
                      subset=None if config.subset_percent is None else train_ints.tolist())


def train(config: TrainConfig, code: CodeSpec, hooks: Optional[TrainHooks] = None) -> Checkpoint:
    t0 = time.perf_counter()
    if config.scheme == "selfsup":
        ckpt = train_selfsupervised(config, code, hooks)
    else:
        ckpt = train_supervised_baseline(config, code, hooks)
    log.info("trained %s for %d epochs in %.1fs, final loss %.5g",
             config.scheme, config.epochs, time.perf_counter() - t0, ckpt.loss_trace[-1])
    return ckpt


# ---------------------------------------------------------------------------
# decoding

def nnd_soft_output(y, model: MlpModel) -> np.ndarray:
    """Network output mapped to (-1, 1) with non-negative meaning bit 0."""
    y = np.asarray(y, dtype=model.weights[0].dtype)
    out, _ = nn_core.mlp_forward(model, np.atleast_2d(y))
    if model.activations[-1] == "sigmoid":
        # logistic head models P(bit = 1)
        out = 1.0 - 2.0 * out
    return out[0] if y.ndim == 1 else out


def hard_bits(v) -> np.ndarray:
    """Threshold decoder outputs: 0 where v >= 0, 1 where v < 0."""
    return (np.asarray(v) < 0).astype(np.uint8)


def nnd_decode(y, model: MlpModel) -> np.ndarray:
    """One-shot decode: a single forward pass followed by the sign threshold."""
    y = np.asarray(y)
    if y.shape[-1] != model.dims[0]:
        raise ValidationError(f"word length {y.shape[-1]} != model input {model.dims[0]}")
    return hard_bits(nnd_soft_output(y, model))


# ---------------------------------------------------------------------------
# persistence

def save_checkpoint(ckpt: Checkpoint, path) -> None:
    text = json.dumps(ckpt.to_dict(), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text)


def checkpoint_from_dict(d: dict) -> Checkpoint:
    if not isinstance(d, dict) or d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {d.get('version') if isinstance(d, dict) else None!r}")
    try:
        code = CodeSpec.from_dict(d["code"])
        model = MlpModel(list(d["dims"]), list(d["activations"]),
                         [np.array(W, dtype=np.float64) for W in d["weights"]],
                         [np.array(b, dtype=np.float64) for b in d["biases"]])
        return Checkpoint(code, model, d["train_config"], int(d["final_epoch"]),
                          int(d["seed"]), list(d["loss_trace"]), d.get("subset"), d.get("w"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc


def load_checkpoint(path) -> Checkpoint:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_from_dict(d)


def message_ints(bits) -> np.ndarray:
    return bits_to_int(bits)
