"""Finite-difference gradient checks and re-encoder sign consistency.

Used by the ``gencheck`` command and the test-suite.  Relative error of a
gradient is ``||analytic - numeric|| / max(||analytic||, ||numeric||)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import bpsk_modulate, make_rng
from .codebook import CodeSpec, encode, int_to_bits
from .nn_core import (bce_with_logits, init_mlp, mlp_backward, mlp_forward, reencode_backward,
                      reencode_real, selfsup_loss)

FD_STEP = 1e-6
REL_TOL = 1e-6
MIN_ABS_V = 0.1


@dataclass
class CheckResult:
    name: str
    points: int
    max_rel_error: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<28s} points={self.points:<4d} max_rel_err={self.max_rel_error:.3e}"


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def central_difference(f: Callable[[], float], x: np.ndarray, h: float = FD_STEP,
                       coords=None) -> np.ndarray:
    """Numerical gradient of ``f`` w.r.t. ``x`` (perturbed in place, then restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    idx_iter = coords if coords is not None else np.ndindex(x.shape)
    for idx in idx_iter:
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def random_v(rng: np.random.Generator, shape, lo: float = MIN_ABS_V) -> np.ndarray:
    mag = rng.uniform(lo, 1.0, size=shape)
    return np.where(rng.random(shape) < 0.5, -mag, mag)


def check_reencode(code: CodeSpec, points: int, rng, corrupt: bool = False) -> CheckResult:
    worst = 0.0
    for _ in range(points):
        v = random_v(rng, (1, code.K))
        c = rng.standard_normal((1, code.N))
        analytic = reencode_backward(v, code, c)
        if corrupt:
            analytic = analytic * (1.0 + 1e-3)
        numeric = central_difference(lambda: float((reencode_real(v, code) * c).sum()), v)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("reencode_backward", points, worst, worst < REL_TOL)


def check_selfsup_loss(code: CodeSpec, points: int, rng, w: float = 0.01,
                       eps: float = 1e-6) -> CheckResult:
    worst = 0.0
    for _ in range(points):
        v = random_v(rng, (2, code.K))
        y = bpsk_modulate(rng.integers(0, 2, (2, code.N))) + 0.5 * rng.standard_normal((2, code.N))
        _, analytic = selfsup_loss(v, y, code, w, eps)
        numeric = central_difference(lambda: selfsup_loss(v, y, code, w, eps)[0], v)
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("selfsup_loss", points, worst, worst < REL_TOL)


def check_mlp(points: int, rng, dims=(16, 12, 10, 8),
              acts=("relu", "tanh", "tanh")) -> CheckResult:
    """Every parameter and input gradient of a small MLP against a random linear readout."""
    worst = 0.0
    for p in range(points):
        model = init_mlp(list(dims), list(acts), make_rng(int(rng.integers(2**31)), p))
        for b in model.biases:
            b[...] = 0.1 * rng.standard_normal(b.shape)
        x = rng.standard_normal((2, dims[0]))
        c = rng.standard_normal((2, dims[-1]))
        out, cache = mlp_forward(model, x)
        grads, x_grad = mlp_backward(model, cache, c)

        def f():
            return float((mlp_forward(model, x)[0] * c).sum())

        analytic = np.concatenate([g.ravel() for g in grads] + [x_grad.ravel()])
        numeric = np.concatenate([central_difference(f, q).ravel() for q in model.params]
                                 + [central_difference(f, x).ravel()])
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("mlp_backward", points, worst, worst < REL_TOL)


def check_end_to_end(code: CodeSpec, points: int, rng, hidden=(12, 10)) -> CheckResult:
    """Self-supervised loss through re-encoder and MLP w.r.t. every parameter."""
    worst = 0.0
    dims = [code.N, *hidden, code.K]
    acts = ["relu"] * len(hidden) + ["tanh"]
    for p in range(points):
        model = init_mlp(dims, acts, make_rng(int(rng.integers(2**31)), p))
        for W in model.weights:
            W *= 3.0  # push outputs away from zero so |v| stays moderate
        y = bpsk_modulate(rng.integers(0, 2, (2, code.N))) + 0.3 * rng.standard_normal((2, code.N))

        def f():
            v, _ = mlp_forward(model, y)
            return selfsup_loss(v, y, code)[0]

        v, cache = mlp_forward(model, y)
        _, v_grad = selfsup_loss(v, y, code)
        grads, _ = mlp_backward(model, cache, v_grad)
        analytic = np.concatenate([g.ravel() for g in grads])
        numeric = np.concatenate([central_difference(f, q).ravel() for q in model.params])
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("selfsup_end_to_end", points, worst, worst < REL_TOL)


def check_bce_head(points: int, rng, dims=(16, 10, 8)) -> CheckResult:
    worst = 0.0
    for p in range(points):
        model = init_mlp(list(dims), ["relu", "sigmoid"], make_rng(int(rng.integers(2**31)), p))
        x = rng.standard_normal((3, dims[0]))
        t = rng.integers(0, 2, (3, dims[-1])).astype(float)

        def f():
            _, cache = mlp_forward(model, x)
            return bce_with_logits(cache.pre[-1], t)[0]

        _, cache = mlp_forward(model, x)
        _, z_grad = bce_with_logits(cache.pre[-1], t)
        grads, _ = mlp_backward(model, cache, z_grad, grad_wrt_last_preactivation=True)
        analytic = np.concatenate([g.ravel() for g in grads])
        numeric = np.concatenate([central_difference(f, q).ravel() for q in model.params])
        worst = max(worst, rel_error(analytic, numeric))
    return CheckResult("bce_head", points, worst, worst < REL_TOL)


def check_sign_consistency(code: CodeSpec, rng) -> CheckResult:
    """All 2^K sign patterns: sign(reencode(v)) must equal BPSK of the GF(2) encoding."""
    msgs = int_to_bits(np.arange(2**code.K), code.K)
    v = (1.0 - 2.0 * msgs) * rng.uniform(MIN_ABS_V, 1.0, size=msgs.shape)
    r = reencode_real(v, code)
    expected = bpsk_modulate(encode(msgs, code))
    mismatches = int(np.count_nonzero(np.sign(r) != expected))
    return CheckResult(f"sign_consistency({code.N},{code.K})", len(msgs),
                       float(mismatches), mismatches == 0)


def run_battery(code: CodeSpec, points: int = 100, seed: int = 0,
                corrupt: bool = False) -> list[CheckResult]:
    rng = make_rng(seed, 0x6C)
    small = CodeSpec.build(3, 4)
    return [
        check_reencode(code, points, rng, corrupt=corrupt),
        check_selfsup_loss(code, points, rng),
        check_mlp(points, rng),
        check_end_to_end(small, max(points // 10, 1), rng),
        check_bce_head(max(points // 10, 1), rng),
        check_sign_consistency(small, rng),
        check_sign_consistency(code, rng),
    ]
