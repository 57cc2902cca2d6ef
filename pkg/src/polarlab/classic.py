"""Reference decoders: brute-force MAP, successive cancellation, min-sum BP.

Every decoder accepts a single word of shape ``(N,)`` or a batch ``(B, N)``
and returns messages of matching leading shape with K bits each.
"""
from __future__ import annotations

import numpy as np

from .channel import LLR_MAX, bpsk_modulate
from .codebook import CodeSpec
from .errors import ValidationError

DEFAULT_BP_ITERS = 30


def _batched(a, N: int, name: str):
    arr = np.asarray(a, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != N:
        raise ValidationError(f"{name} length {arr.shape[-1]} != N={N}")
    return arr, single


def map_decode(y, code: CodeSpec) -> np.ndarray:
    """Maximum-likelihood decoding by exhaustive correlation with all codewords.

    Under a uniform prior this is MAP.  Ties resolve to the lexicographically
    smallest message because ``argmax`` returns the first maximum and the
    codebook is enumerated in lexicographic order.
    """
    y, single = _batched(y, code.N, "y")
    symbols = bpsk_modulate(code.codewords)
    best = np.argmax(y @ symbols.T, axis=1)
    out = code.messages[best]
    return out[0] if single else out


def _f_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 2 atanh(tanh(a/2) tanh(b/2)) in log domain
    out = (np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
           + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b))))
    return np.clip(out, -LLR_MAX, LLR_MAX)


def _f_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.copysign(np.minimum(np.abs(a), np.abs(b)), a * b)


def _g(a: np.ndarray, b: np.ndarray, u: np.ndarray) -> np.ndarray:
    return b + (1.0 - 2.0 * u) * a


def sc_decode(llr, code: CodeSpec) -> np.ndarray:
    """Successive-cancellation decoding over the natural-order polar graph.

    With ``x = u F^{(x)n}`` the first half of ``u`` feeds ``x_L + x_R`` and the
    second half feeds ``x_R``, so the left branch uses the check-node update and
    the right branch the variable-node update conditioned on the left
    re-encoding.
    """
    llr, single = _batched(llr, code.N, "llr")
    u_hat, _ = _sc_node(llr, code.info_mask)
    out = u_hat[:, code.info_mask]
    return out[0] if single else out


def _sc_node(llr: np.ndarray, info: np.ndarray):
    if llr.shape[1] == 1:
        if info[0]:
            u = (llr < 0).astype(np.uint8)
        else:
            u = np.zeros_like(llr, dtype=np.uint8)
        return u, u
    h = llr.shape[1] // 2
    a, b = llr[:, :h], llr[:, h:]
    u_left, x_left = _sc_node(_f_exact(a, b), info[:h])
    u_right, x_right = _sc_node(_g(a, b, x_left), info[h:])
    return np.hstack([u_left, u_right]), np.hstack([x_left ^ x_right, x_right])


def bp_decode(llr, code: CodeSpec, iterations: int = DEFAULT_BP_ITERS) -> np.ndarray:
    """Min-sum belief propagation on the n-stage polar factor graph.

    Stage ``s`` (from the message side) pairs positions ``i`` and ``i + 2^s``
    with ``i`` having bit ``s`` clear; the right-hand values obey
    ``x_i = u_i + u_{i+2^s}`` and ``x_{i+2^s} = u_{i+2^s}``.  Leftward messages
    start from the channel LLRs, rightward ones from the frozen-bit priors.
    """
    if iterations < 1:
        raise ValidationError(f"BP needs at least one iteration, got {iterations}")
    llr, single = _batched(llr, code.N, "llr")
    B, N, n = llr.shape[0], code.N, code.n
    L = np.zeros((n + 1, B, N))
    R = np.zeros((n + 1, B, N))
    L[n] = np.clip(llr, -LLR_MAX, LLR_MAX)
    R[0][:, ~code.info_mask] = LLR_MAX

    def halves(arr: np.ndarray, s: int):
        # views of the (i, i + 2^s) butterfly partners at stage s
        v = arr.reshape(B, N >> (s + 1), 2, 1 << s)
        return v[:, :, 0, :], v[:, :, 1, :]

    for _ in range(iterations):
        for s in range(n - 1, -1, -1):
            La, Lb = halves(L[s + 1], s)
            Ra, Rb = halves(R[s], s)
            out_a, out_b = halves(L[s], s)
            out_a[...] = _f_minsum(La, Lb + Rb)
            out_b[...] = _f_minsum(Ra, La) + Lb
        for s in range(n):
            La, Lb = halves(L[s + 1], s)
            Ra, Rb = halves(R[s], s)
            out_a, out_b = halves(R[s + 1], s)
            out_a[...] = _f_minsum(Ra, Lb + Rb)
            out_b[...] = _f_minsum(Ra, La) + Rb

    total = L[0] + R[0]
    out = (total[:, code.info_mask] < 0).astype(np.uint8)
    return out[0] if single else out
