"""Staircase adaptive quantization (SAQ) of a multi-query-attention KV cache.

The newest tokens stay at full precision. Older tokens are stored in
segments of ``S`` tokens whose bit-width halves with age (16 -> 8 -> 4 -> 2),
and the oldest level keeps growing. Keys are quantized in groups of ``G``
tokens per channel, values in groups of ``G`` channels per token.

A level scheduled at 16 bits is full precision and is stored unquantized;
``group_quantize`` itself still accepts 16 as an integer code width.
Attention dequantizes before the matrix products, so results match a fused
dequantizing kernel; there are no integer kernels here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, GroupSizeMismatch
from .rng import substream

TOKEN = "token"
CHANNEL = "channel"
META_BITS = 16  # per scale and per zero-point
FP_BITS = 16


@dataclass(frozen=True)
class QuantizedTensor:
    codes: np.ndarray  # (tokens, d) integer codes
    bits: int
    z: np.ndarray
    s: np.ndarray
    group_dim: str
    group_size: int

    @property
    def logical_shape(self) -> tuple[int, int]:
        return self.codes.shape

    @property
    def tokens(self) -> int:
        return self.codes.shape[0]

    @property
    def n_groups(self) -> int:
        return self.z.size


def _grouped(X: np.ndarray, group_dim: str, G: int) -> np.ndarray:
    """View X (tokens x d) as (outer, n_groups, G) with groups on the last axis."""
    T, d = X.shape
    if group_dim == TOKEN:
        if d % G:
            raise GroupSizeMismatch(f"group size {G} does not divide d={d}")
        return X.reshape(T, d // G, G)
    if group_dim == CHANNEL:
        if T % G:
            raise GroupSizeMismatch(f"group size {G} does not divide {T} tokens")
        return X.T.reshape(d, T // G, G)
    raise ValueError(f"unknown group dimension {group_dim!r}")


def _ungrouped(Y: np.ndarray, group_dim: str, shape: tuple[int, int]) -> np.ndarray:
    T, d = shape
    if group_dim == TOKEN:
        return Y.reshape(T, d)
    return Y.reshape(d, T).T


def group_quantize(X, bits: int, group_dim: str, G: int) -> QuantizedTensor:
    X = np.asarray(X, dtype=float)
    if not 1 <= bits <= 16:
        raise ValueError(f"bits must be in 1..16, got {bits}")
    if G < 1:
        raise GroupSizeMismatch("group size must be positive")
    view = _grouped(X, group_dim, G)
    z = view.min(axis=-1)
    levels = 2**bits - 1
    s = (view.max(axis=-1) - z) / levels
    scaled = np.divide(view - z[..., None], s[..., None], out=np.zeros_like(view), where=s[..., None] > 0)
    codes = np.clip(np.floor(scaled + 0.5), 0, levels).astype(np.int64)
    return QuantizedTensor(_ungrouped(codes, group_dim, X.shape), bits, z, s, group_dim, G)


def group_dequantize(qt: QuantizedTensor) -> np.ndarray:
    view = _grouped(qt.codes, qt.group_dim, qt.group_size)
    return _ungrouped(view * qt.s[..., None] + qt.z[..., None], qt.group_dim, qt.logical_shape)


@dataclass(frozen=True)
class FullPrecisionSegment:
    """A cache level at 16 bits: 16 bits means full precision, so nothing is quantized."""

    data: np.ndarray
    group_dim: str
    group_size: int
    bits: int = FP_BITS

    @property
    def logical_shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def tokens(self) -> int:
        return self.data.shape[0]

    @property
    def n_groups(self) -> int:
        return 0


def _store(X, bits: int, group_dim: str, G: int):
    if bits >= FP_BITS:
        _grouped(np.asarray(X, dtype=float), group_dim, G)  # same divisibility rules
        return FullPrecisionSegment(np.array(X, dtype=float), group_dim, G)
    return group_quantize(X, bits, group_dim, G)


def _load(seg) -> np.ndarray:
    return seg.data if isinstance(seg, FullPrecisionSegment) else group_dequantize(seg)


def _requantize(parts: list, bits: int):
    first = parts[0]
    X = np.concatenate([_load(p) for p in parts])
    return _store(X, bits, first.group_dim, first.group_size)


def _stack_token_groups(parts: list):
    """Concatenate token-grouped segments of equal bits without touching codes."""
    bits = {p.bits for p in parts}
    assert len(bits) == 1 and all(p.group_dim == TOKEN for p in parts)
    if isinstance(parts[0], FullPrecisionSegment):
        return FullPrecisionSegment(np.concatenate([p.data for p in parts]), TOKEN, parts[0].group_size)
    return QuantizedTensor(
        np.concatenate([p.codes for p in parts]),
        bits.pop(),
        np.concatenate([p.z for p in parts]),
        np.concatenate([p.s for p in parts]),
        TOKEN,
        parts[0].group_size,
    )


def _token_rows(seg) -> list:
    if isinstance(seg, FullPrecisionSegment):
        return [FullPrecisionSegment(seg.data[i : i + 1], TOKEN, seg.group_size) for i in range(seg.tokens)]
    return [
        QuantizedTensor(seg.codes[i : i + 1], seg.bits, seg.z[i : i + 1], seg.s[i : i + 1], TOKEN, seg.group_size)
        for i in range(seg.tokens)
    ]


@dataclass(frozen=True)
class SAQParams:
    S: int
    G: int
    d: int
    bit_schedule: tuple[int, ...] = (16, 8, 4, 2)

    def __post_init__(self):
        b = self.bit_schedule
        if self.S < 1 or self.G < 1 or self.d < 1:
            raise ValueError("S, G and d must be positive")
        if len(b) < 2:
            raise ValueError("need at least one quantized level after full precision")
        if b[0] != FP_BITS:
            raise ValueError("the first level must be full precision (16 bits)")
        if any(not 1 <= x <= 16 for x in b) or any(x < y for x, y in zip(b, b[1:])):
            raise ValueError(f"bit schedule {b} must be non-increasing within 1..16")
        if self.d % self.G or self.S % self.G:
            raise GroupSizeMismatch(f"group size {self.G} must divide d={self.d} and S={self.S}")

    @property
    def q_n(self) -> int:
        return len(self.bit_schedule)

    def level_bits(self, i: int) -> int:
        """Bits of quantized level i (1 = newest), i.e. B_{i+1}."""
        return self.bit_schedule[min(i, self.q_n - 1)]

    @property
    def is_halving(self) -> bool:
        b = self.bit_schedule
        return all(x == 2 * y for x, y in zip(b, b[1:]))


@dataclass(frozen=True)
class Projections:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray


def make_projections(d: int, seed: int) -> Projections:
    rng = substream(seed, "saq.projections")
    W = rng.normal(size=(3, d, d)) / math.sqrt(d)
    return Projections(W[0], W[1], W[2])


@dataclass
class KVCache:
    params: SAQParams
    proj: Projections
    key_segments: list = field(default_factory=list)
    value_segments: list = field(default_factory=list)
    key_residual: np.ndarray | None = None
    value_residual: np.ndarray | None = None
    tokens_seen: int = 0

    def __post_init__(self):
        d = self.params.d
        if self.key_residual is None:
            self.key_residual = np.zeros((0, d))
        if self.value_residual is None:
            self.value_residual = np.zeros((0, d))

    def keys(self) -> np.ndarray:
        return np.concatenate([*(_load(q) for q in self.key_segments), self.key_residual])

    def values(self) -> np.ndarray:
        return np.concatenate([*(_load(q) for q in self.value_segments), self.value_residual])

    def key_bits(self) -> list[int]:
        return [q.bits for q in self.key_segments]

    def value_bits(self) -> list[int]:
        return [q.bits for q in self.value_segments]


def _segment_plan(n: int, S: int, q_n: int) -> list[tuple[int, int, int]]:
    """(start, end, level) chunks of ``n`` tokens, oldest first.

    Chunks of ``S`` are cut from the newest end; at most ``q_n - 1`` levels
    exist and the oldest chunk absorbs whatever is left.
    """
    if n == 0:
        return []
    n_seg = min(max(1, n // S), q_n - 1)
    plan = []
    for i in range(1, n_seg):
        plan.append((n - i * S, n - (i - 1) * S, i))
    plan.append((0, n - (n_seg - 1) * S, n_seg))
    return plan[::-1]


def kquant(X_K, params: SAQParams) -> tuple[list, np.ndarray]:
    """Channel-grouped staircase quantization of keys; the last ``l mod S`` stay full precision."""
    X_K = np.asarray(X_K, dtype=float)
    l = X_K.shape[0]
    r = l % params.S
    body = X_K[: l - r]
    segs = [
        _store(body[a:b], params.level_bits(i), CHANNEL, params.G)
        for a, b, i in _segment_plan(l - r, params.S, params.q_n)
    ]
    return segs, X_K[l - r :].copy()


def _vquant(X_V, params: SAQParams) -> list:
    return [
        _store(X_V[a:b], params.level_bits(i), TOKEN, params.G)
        for a, b, i in _segment_plan(len(X_V), params.S, params.q_n)
    ]


def _check_d(X, d):
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionMismatch(f"expected (tokens, {d}) input, got {X.shape}")


def prefill(X, params: SAQParams, proj: Projections) -> tuple[KVCache, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float).reshape(-1, params.d) if np.size(X) == 0 else np.asarray(X, dtype=float)
    _check_d(X, params.d)
    K, V = X @ proj.W_K, X @ proj.W_V
    l = len(X)
    g = max(0, l - params.S)
    key_segs, key_res = kquant(K, params)
    cache = KVCache(
        params,
        proj,
        key_segments=key_segs,
        value_segments=_vquant(V[:g], params),
        key_residual=key_res,
        value_residual=V[g:].copy(),
        tokens_seen=l,
    )
    return cache, K, V


def _flush_keys(cache: KVCache) -> None:
    p = cache.params
    new, _ = kquant(cache.key_residual, p)
    newest_first = new + cache.key_segments[::-1]
    cap = p.q_n - 1
    # levels 1..cap-1 stay separate; everything from level cap on merges
    separate, tail = newest_first[: cap - 1], newest_first[cap - 1 :]
    out = separate[:1] + [_requantize([seg], p.level_bits(lvl)) for lvl, seg in enumerate(separate[1:], 2)]
    if len(tail) == 1 and tail[0] is new[0]:
        out += tail
    elif tail:
        out.append(_requantize(tail[::-1], p.level_bits(cap)))
    cache.key_segments = out[::-1]
    cache.key_residual = np.zeros((0, p.d))


def _rechunk_values(cache: KVCache) -> None:
    p = cache.params
    rows = [r for seg in cache.value_segments for r in _token_rows(seg)]
    out = []
    for a, b, level in _segment_plan(len(rows), p.S, p.q_n):
        chunk = rows[a:b]
        if level == 1 and all(r.bits == p.level_bits(1) for r in chunk):
            out.append(_stack_token_groups(chunk))
        else:
            out.append(_requantize(chunk, p.level_bits(level)))
    cache.value_segments = out


def _push_value(cache: KVCache) -> None:
    p = cache.params
    R = p.S
    q = _store(cache.value_residual[:-R], p.level_bits(1), TOKEN, p.G)
    cache.value_residual = cache.value_residual[-R:]
    segs = cache.value_segments
    if segs and segs[-1].bits == q.bits and segs[-1].tokens < p.S:
        segs[-1] = _stack_token_groups([segs[-1], q])
    else:
        segs.append(q)
    if sum(s.tokens for s in segs) % p.S == 0:
        _rechunk_values(cache)


def attend(t_Q: np.ndarray, K: np.ndarray, V: np.ndarray) -> np.ndarray:
    a = K @ t_Q / math.sqrt(len(t_Q))
    e = np.exp(a - a.max())
    return (e / e.sum()) @ V


def decode_step(cache: KVCache, t) -> tuple[np.ndarray, KVCache]:
    """Append one token to the cache and return its attention output."""
    p = cache.params
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.shape != (p.d,):
        raise DimensionMismatch(f"expected a {p.d}-vector, got shape {t.shape}")
    W = cache.proj
    t_Q, t_K, t_V = t @ W.W_Q, t @ W.W_K, t @ W.W_V
    cache.key_residual = np.vstack([cache.key_residual, t_K])
    cache.value_residual = np.vstack([cache.value_residual, t_V])
    cache.tokens_seen += 1
    if len(cache.key_residual) == p.S:
        _flush_keys(cache)
    if len(cache.value_residual) > p.S:
        _push_value(cache)
    return attend(t_Q, cache.keys(), cache.values()), cache


def check_cache(cache: KVCache) -> None:
    """Assert token conservation, residual bounds and the staircase shape."""
    p = cache.params
    n_k = sum(q.tokens for q in cache.key_segments) + len(cache.key_residual)
    n_v = sum(q.tokens for q in cache.value_segments) + len(cache.value_residual)
    assert n_k == cache.tokens_seen, f"keys hold {n_k} tokens, expected {cache.tokens_seen}"
    assert n_v == cache.tokens_seen, f"values hold {n_v} tokens, expected {cache.tokens_seen}"
    assert len(cache.key_residual) < p.S
    assert len(cache.value_residual) <= p.S
    allowed = set(p.bit_schedule[1:])
    for bits in (cache.key_bits(), cache.value_bits()):
        assert set(bits) <= allowed, f"bits {bits} not in schedule"
        assert all(a <= b for a, b in zip(bits, bits[1:])), f"bits {bits} are not a staircase"
    assert len(cache.key_segments) <= p.q_n - 1
    for q in cache.key_segments + cache.value_segments:
        if isinstance(q, FullPrecisionSegment):
            continue
        assert q.codes.min(initial=0) >= 0 and q.codes.max(initial=0) <= 2**q.bits - 1


def cache_footprint(cache: KVCache) -> int:
    """Storage in bits: codes, per-group scale and zero-point, fp residuals."""
    d = cache.params.d
    bits = sum(q.tokens * d * q.bits + q.n_groups * 2 * META_BITS for q in cache.key_segments + cache.value_segments)
    return bits + (len(cache.key_residual) + len(cache.value_residual)) * d * FP_BITS


def fp_footprint(n_tokens: int, d: int) -> int:
    return n_tokens * d * FP_BITS * 2


# full-precision oracle and experiment driver ---------------------------------


def mqa_reference(X_prompt, T, proj: Projections) -> np.ndarray:
    """Exact single-head decode outputs for each row of T after the prompt."""
    X_prompt = np.asarray(X_prompt, dtype=float).reshape(-1, proj.W_K.shape[0])
    X = np.vstack([X_prompt, T])
    K, V = X @ proj.W_K, X @ proj.W_V
    l = len(X_prompt)
    return np.stack([attend(T[j] @ proj.W_Q, K[: l + j + 1], V[: l + j + 1]) for j in range(len(T))])


def run_decode(params: SAQParams, l_prompt: int, steps: int, seed: int = 0) -> list[dict]:
    """Prefill a random prompt, decode random tokens, compare with the exact oracle."""
    rng = substream(seed, "saq.inputs")
    X = rng.normal(size=(l_prompt + steps, params.d))
    proj = make_projections(params.d, seed)
    ref = mqa_reference(X[:l_prompt], X[l_prompt:], proj)
    cache, _, _ = prefill(X[:l_prompt], params, proj)
    rows = []
    for j in range(steps):
        out, cache = decode_step(cache, X[l_prompt + j])
        err = np.abs(out - ref[j])
        rows.append(
            {
                "step": j + 1,
                "tokens_seen": cache.tokens_seen,
                "max_abs_error": float(err.max()),
                "mean_abs_error": float(err.mean()),
                "rel_error": float(np.linalg.norm(out - ref[j]) / np.linalg.norm(ref[j])),
                "footprint_bits": cache_footprint(cache),
                "fp_bits": fp_footprint(cache.tokens_seen, params.d),
            }
        )
    return rows
