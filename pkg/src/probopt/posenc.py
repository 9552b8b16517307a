"""ALiBi slopes and biases, harmonic-factored biases, RoPE, and attention
weights that combine RoPE with either bias.

Bias vectors use 1-indexed positions: the bias row for query ``i`` covers
keys ``1..i`` and its last entry (the query itself) is 0. The harmonic
variant scales the ALiBi term at key ``j`` by ``1 / (j (j + 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OddDimension, ShapeMismatch

ROPE_BASE = 10000.0


@dataclass(frozen=True)
class SlopeSet:
    slopes: tuple[float, ...]

    @property
    def H(self) -> int:
        return len(self.slopes)


@dataclass(frozen=True)
class AttentionInputs:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.Q.ndim != 2 or self.Q.shape != self.K.shape or self.V.shape[0] != self.K.shape[0]:
            raise ShapeMismatch(
                f"Q{self.Q.shape}, K{self.K.shape}, V{self.V.shape} are not consistent"
            )

    @property
    def d(self) -> int:
        return self.Q.shape[1]


def alibi_slopes(H: int) -> SlopeSet:
    """Geometric slopes 2^(-8/H), 2^(-16/H), ...; H=8 gives 1/2 .. 1/256."""
    if H < 1:
        raise ValueError("need at least one head")
    return SlopeSet(tuple(2.0 ** (-8.0 * (h + 1) / H) for h in range(H)))


def alibi_bias(i: int, m: float) -> np.ndarray:
    if i < 1:
        raise ValueError("query position is 1-indexed")
    return m * np.arange(1 - i, 1, dtype=float)


def harmonic_bias(i: int, m: float) -> np.ndarray:
    if i < 1:
        raise ValueError("query position is 1-indexed")
    j = np.arange(1, i + 1, dtype=float)
    return (j - i) / (j * (j + 1)) * m


def harmonic_factor_sum(i: int) -> float:
    k = np.arange(1, i + 1, dtype=float)
    return math.fsum(1.0 / (k * (k + 1)))


def rope_apply(x: np.ndarray, pos: float, base: float = ROPE_BASE) -> np.ndarray:
    """Rotate coordinate pairs (x[2t], x[2t+1]) by pos * base^(-2t/d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if d % 2:
        raise OddDimension(f"RoPE needs an even dimension, got {d}")
    theta = pos * base ** (-np.arange(0, d, 2) / d)
    cos, sin = np.cos(theta), np.sin(theta)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_rows(X: np.ndarray, base: float = ROPE_BASE) -> np.ndarray:
    """RoPE each row of X at its 0-indexed row position."""
    return np.stack([rope_apply(row, p, base) for p, row in enumerate(X)]) if len(X) else X.copy()


def bias_matrix(n: int, m: float, kind: str = "harmonic") -> np.ndarray:
    """(n, n) additive bias with -inf above the diagonal."""
    fn = {"harmonic": harmonic_bias, "alibi": alibi_bias, "none": lambda i, m: np.zeros(i)}[kind]
    B = np.full((n, n), -np.inf)
    for i in range(1, n + 1):
        B[i - 1, :i] = fn(i, m)
    return B


def softmax_rows(S: np.ndarray) -> np.ndarray:
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def factored_scores(
    inputs: AttentionInputs,
    slopes: SlopeSet,
    head: int,
    base: float = ROPE_BASE,
    bias: str = "harmonic",
) -> np.ndarray:
    """Causal attention weights from RoPE'd Q, K plus a per-head position bias.

    ``bias="harmonic"`` is the factored RoPE/ALiBi combination; ``"alibi"``
    and ``"none"`` give the plain variants for comparison.
    """
    if not 0 <= head < slopes.H:
        raise ShapeMismatch(f"head {head} out of range for {slopes.H} slopes")
    if inputs.d % 2:
        raise OddDimension(f"RoPE needs an even head dimension, got {inputs.d}")
    n = inputs.Q.shape[0]
    Qr, Kr = rope_rows(inputs.Q, base), rope_rows(inputs.K, base)
    S = Qr @ Kr.T / math.sqrt(inputs.d) + bias_matrix(n, slopes.slopes[head], bias)
    return softmax_rows(S)


def factored_attention(inputs: AttentionInputs, slopes: SlopeSet, head: int, **kw) -> np.ndarray:
    return factored_scores(inputs, slopes, head, **kw) @ inputs.V
