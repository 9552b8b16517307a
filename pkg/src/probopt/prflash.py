"""Probabilistic block selection for causal tiled attention.

Blocks within distance ``k`` of the diagonal get probability 1 and farther
blocks decay harmonically, ``1 / ((n - k)(n - k + 1))``. Each block-row and
block-column gets the mean probability over its causal blocks; a seeded
uniform draw is blended in, and rows/columns whose blend falls below the
adjusted sparsity threshold are skipped. Diagonal blocks are always kept.

Attention here is a dense desk-scale simulation that measures the error the
mask introduces. It does not model tiled memory traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DistanceOutOfRange, EmptyProbs, IndexOutOfRange, ShapeMismatch

MAX_TOKENS = 4096


@dataclass(frozen=True)
class BlockProbModel:
    N: int
    B_r: int
    B_c: int
    k: int

    def __post_init__(self):
        if self.N < 1 or self.B_r < 1 or self.B_c < 1:
            raise ValueError("context length and block sizes must be positive")
        if not 0 <= self.k < self.M_blocks:
            raise ValueError(f"cutoff k={self.k} must lie in [0, {self.M_blocks})")

    @property
    def n_row_blocks(self) -> int:
        return math.ceil(self.N / self.B_r)

    @property
    def n_col_blocks(self) -> int:
        return math.ceil(self.N / self.B_c)

    @property
    def M_blocks(self) -> int:
        return max(self.n_row_blocks, self.n_col_blocks)


@dataclass(frozen=True)
class SelectionParams:
    w: float
    s: float
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.w <= 1:
            raise ValueError("w must lie in [0, 1]")
        if not 0 <= self.s <= 100:
            raise ValueError("s must lie in [0, 100]")


@dataclass(frozen=True)
class BlockMask:
    keep: np.ndarray
    dropped_rows: tuple[int, ...]
    dropped_cols: tuple[int, ...]
    threshold: float
    block_size: int

    @property
    def n_blocks(self) -> int:
        return self.keep.shape[0]

    @property
    def kept_rows(self) -> list[int]:
        return [q for q in range(self.n_blocks) if q not in self.dropped_rows]

    @property
    def kept_cols(self) -> list[int]:
        return [c for c in range(self.n_blocks) if c not in self.dropped_cols]

    @property
    def dropped_fraction(self) -> float:
        causal = np.tril(np.ones_like(self.keep))
        return 1.0 - self.keep.sum() / causal.sum()

    @classmethod
    def full(cls, n_blocks: int, block_size: int) -> "BlockMask":
        return cls(np.tril(np.ones((n_blocks, n_blocks), dtype=bool)), (), (), 0.0, block_size)


@dataclass(frozen=True)
class ErrorStats:
    max_abs_error: float
    mean_abs_error: float
    dropped_fraction: float


def block_pdf(model: BlockProbModel, n: int) -> float:
    if not 0 <= n < model.M_blocks:
        raise DistanceOutOfRange(f"block distance {n} outside [0, {model.M_blocks})")
    if n <= model.k:
        return 1.0
    return 1.0 / ((n - model.k) * (n - model.k + 1))


def row_prob(model: BlockProbModel, q: int) -> float:
    if not 0 <= q < model.n_row_blocks:
        raise IndexOutOfRange(f"block row {q} outside [0, {model.n_row_blocks})")
    return sum(block_pdf(model, q - i) for i in range(q + 1)) / (q + 1)


def col_prob(model: BlockProbModel, c: int) -> float:
    if not 0 <= c < model.n_col_blocks:
        raise IndexOutOfRange(f"block column {c} outside [0, {model.n_col_blocks})")
    rows = range(c, model.M_blocks)
    return sum(block_pdf(model, q - c) for q in rows) / len(rows)


def decision_factor(prob: float, params: SelectionParams, r: float) -> float:
    return prob * params.w + r * (1 - params.w)


def nearest_rank_percentile(values, s: float) -> float:
    v = sorted(values)
    if not v:
        raise EmptyProbs("no probabilities to take a percentile of")
    rank = max(1, math.ceil(s / 100 * len(v)))
    return v[rank - 1]


def adjusted_sparsity(probs, params: SelectionParams) -> float:
    p_s = nearest_rank_percentile(probs, params.s)
    return p_s * params.w + params.s / 100 * (1 - params.w)


def build_mask(model: BlockProbModel, params: SelectionParams) -> BlockMask:
    if model.B_r != model.B_c:
        raise ShapeMismatch("mask construction needs square blocks (B_r == B_c)")
    n = model.n_row_blocks
    rows = [row_prob(model, q) for q in range(n)]
    cols = [col_prob(model, c) for c in range(n)]
    rng = np.random.default_rng(params.seed)
    r_rows, r_cols = rng.random(n), rng.random(n)
    threshold = adjusted_sparsity(rows + cols, params)
    drop_r = [q for q in range(n) if decision_factor(rows[q], params, r_rows[q]) < threshold]
    drop_c = [c for c in range(n) if decision_factor(cols[c], params, r_cols[c]) < threshold]

    keep = np.tril(np.ones((n, n), dtype=bool))
    keep[drop_r, :] = False
    keep[:, drop_c] = False
    keep = np.tril(keep)
    keep[np.arange(n), np.arange(n)] = True
    return BlockMask(keep, tuple(drop_r), tuple(drop_c), threshold, model.B_r)


def check_mask(mask: BlockMask) -> None:
    assert not np.triu(mask.keep, 1).any(), "mask keeps a block above the diagonal"
    assert mask.keep.diagonal().all(), "mask drops a diagonal block"


# attention -----------------------------------------------------------------


def _allowed_keys(mask: BlockMask, n_tokens: int) -> list[np.ndarray]:
    """For each query token, the ascending key indices it may attend to."""
    B = mask.block_size
    out = []
    for i in range(n_tokens):
        cols = np.nonzero(mask.keep[i // B])[0]
        keys = np.concatenate([np.arange(c * B, min((c + 1) * B, n_tokens)) for c in cols])
        out.append(keys[keys <= i])
    return out


def _attend_row(q, K_sel, V_sel, scale):
    # elementwise product + row sum: fixed reduction order for a given row
    s = (K_sel * q).sum(axis=1) * scale
    e = np.exp(s - s.max())
    p = e / e.sum()
    return (p[:, None] * V_sel).sum(axis=0)


def dense_causal_attention(Q, K, V, extra_mask=None):
    """Plain softmax(QK^T / sqrt(d) + mask) V with -inf masking."""
    n, d = Q.shape
    S = Q @ K.T / math.sqrt(d)
    S[np.triu_indices(n, 1)] = -np.inf
    if extra_mask is not None:
        S[~extra_mask] = -np.inf
    S -= S.max(axis=1, keepdims=True)
    P = np.exp(S)
    P /= P.sum(axis=1, keepdims=True)
    return P @ V


def _check_qkv(Q, K, V):
    if Q.ndim != 2 or Q.shape != K.shape or V.shape[0] != K.shape[0]:
        raise ShapeMismatch(f"Q{Q.shape}, K{K.shape}, V{V.shape} are not consistent")
    if Q.shape[0] > MAX_TOKENS:
        raise ShapeMismatch(f"dense simulation limited to {MAX_TOKENS} tokens")


def masked_attention(Q, K, V, mask: BlockMask) -> tuple[np.ndarray, ErrorStats]:
    """Causal attention restricted to kept blocks, with error vs exact attention."""
    _check_qkv(Q, K, V)
    n, d = Q.shape
    if math.ceil(n / mask.block_size) != mask.n_blocks:
        raise ShapeMismatch("mask block grid does not match the sequence length")
    scale = 1 / math.sqrt(d)
    out = np.empty((n, V.shape[1]))
    for i, keys in enumerate(_allowed_keys(mask, n)):
        out[i] = _attend_row(Q[i], K[keys], V[keys], scale)
    exact = dense_causal_attention(Q, K, V)
    err = np.abs(out - exact)
    return out, ErrorStats(float(err.max()), float(err.mean()), float(mask.dropped_fraction))


def token_mask(mask: BlockMask, n: int) -> np.ndarray:
    """Token-level boolean expansion of the block mask (without causality)."""
    B = mask.block_size
    blocks = np.arange(n) // B
    return mask.keep[blocks][:, blocks]


def compact_reshape(mask: BlockMask) -> tuple[dict[int, int], dict[int, int]]:
    """Dense renumbering of the block-rows and block-columns still in use.

    Rows: every block-row that was not thresholded out. Columns: every block
    column that is kept somewhere, which includes the diagonal block of each
    kept row.
    """
    rows = mask.kept_rows
    cols = sorted(set(np.nonzero(mask.keep[rows].any(axis=0))[0].tolist())) if rows else []
    return {q: i for i, q in enumerate(rows)}, {c: i for i, c in enumerate(cols)}


def compacted_attention(Q, K, V, mask: BlockMask) -> dict[int, np.ndarray]:
    """Attention over gathered (compacted) tensors; returns {query index: output}.

    Only queries in kept block-rows are computed. The keys of every kept row
    are a subset of the kept columns, so each query reads its keys from the
    compacted K, V in the original order.
    """
    _check_qkv(Q, K, V)
    n, d = Q.shape
    B = mask.block_size
    row_map, col_map = compact_reshape(mask)

    def tokens(block_ids):
        return np.concatenate([np.arange(b * B, min((b + 1) * B, n)) for b in block_ids]) if block_ids else np.zeros(0, int)

    q_tok = tokens(list(row_map))
    k_tok = tokens(list(col_map))
    Qc, Kc, Vc = Q[q_tok], K[k_tok], V[k_tok]
    k_block = k_tok // B
    scale = 1 / math.sqrt(d)
    out = {}
    for ci, i in enumerate(q_tok):
        allowed = mask.keep[i // B][k_block] & (k_tok <= i)
        sel = np.nonzero(allowed)[0]
        out[int(i)] = _attend_row(Qc[ci], Kc[sel], Vc[sel], scale)
    return out
