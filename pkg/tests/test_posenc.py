import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probopt.errors import OddDimension, ShapeMismatch
from probopt.posenc import (
    AttentionInputs,
    SlopeSet,
    alibi_bias,
    alibi_slopes,
    bias_matrix,
    factored_attention,
    factored_scores,
    harmonic_bias,
    harmonic_factor_sum,
    rope_apply,
)


def test_slopes():
    assert alibi_slopes(8).slopes == tuple(2.0**-h for h in range(1, 9))
    assert alibi_slopes(1).slopes == (2.0**-8,)
    s16 = alibi_slopes(16).slopes
    assert s16[0] == pytest.approx(2**-0.5, rel=1e-15)
    assert all(a > b > 0 for a, b in zip(s16, s16[1:]))


def test_alibi_bias():
    assert alibi_bias(4, 1).tolist() == [-3, -2, -1, 0]
    assert alibi_bias(1, 0.3).tolist() == [0]
    assert alibi_bias(3, 0.5).tolist() == [-1, -0.5, 0]


def test_harmonic_bias():
    assert harmonic_bias(4, 1).tolist() == [-1.5, -1 / 3, -1 / 12, 0]
    assert harmonic_bias(1, 2.0).tolist() == [0]
    assert harmonic_bias(2, 1).tolist() == [-0.5, 0]
    # final entry is +0.0, not -0.0
    assert math.copysign(1, harmonic_bias(5, 1)[-1]) == 1
    assert math.copysign(1, alibi_bias(5, 1)[-1]) == 1


def exact_harmonic(i, m=Fraction(1)):
    return [m * Fraction(j - i, j * (j + 1)) for j in range(1, i + 1)]


@settings(max_examples=100)
@given(st.integers(1, 200), st.sampled_from([1.0, 0.5, 2.0**-8, 0.37]))
def test_bias_properties(i, m):
    a, h = alibi_bias(i, m), harmonic_bias(i, m)
    assert a[-1] == 0 and h[-1] == 0
    assert (a <= 0).all() and (h <= 0).all()
    assert (np.diff(a) >= 0).all()
    j = np.arange(1, i + 1)
    assert np.array_equal(np.abs(h), (i - j) / (j * (j + 1)) * m)
    exact = exact_harmonic(i, Fraction(m))
    assert np.allclose(h, [float(x) for x in exact], rtol=1e-15, atol=0)


def test_harmonic_factor_sum():
    assert harmonic_factor_sum(1) == 0.5
    assert harmonic_factor_sum(3) == pytest.approx(0.75, abs=1e-15)
    i = 10**4
    assert abs(harmonic_factor_sum(i) - i / (i + 1)) <= 1e-12
    assert sum(Fraction(1, k * (k + 1)) for k in range(1, 51)) == Fraction(50, 51)


def test_rope_basics():
    x = np.array([0.3, -1.2, 2.0, 0.5])
    assert np.array_equal(rope_apply(x, 0), x)
    out = rope_apply(np.array([1.0, 0.0]), math.pi / 2)
    assert np.allclose(out, [0.0, 1.0], atol=1e-12, rtol=0)
    with pytest.raises(OddDimension):
        rope_apply(np.ones(3), 1)


def test_rope_matches_complex_rotation():
    rng = np.random.default_rng(0)
    d, pos, base = 8, 13, 10000.0
    x = rng.normal(size=d)
    z = (x[0::2] + 1j * x[1::2]) * np.exp(1j * pos * base ** (-np.arange(0, d, 2) / d))
    expect = np.empty(d)
    expect[0::2], expect[1::2] = z.real, z.imag
    assert np.allclose(rope_apply(x, pos, base), expect, atol=1e-14, rtol=0)


@settings(max_examples=100)
@given(st.integers(0, 10**6), st.integers(1, 32), st.integers(0, 512), st.integers(0, 512), st.integers(0, 128))
def test_rope_norm_and_relative_position(seed, half, m, n, t):
    rng = np.random.default_rng(seed)
    d = 2 * half
    q, k = rng.normal(size=d), rng.normal(size=d)
    assert abs(np.linalg.norm(rope_apply(q, m)) - np.linalg.norm(q)) <= 1e-12
    a = rope_apply(q, m) @ rope_apply(k, n)
    b = rope_apply(q, m + t) @ rope_apply(k, n + t)
    assert abs(a - b) <= 1e-9


def inputs(n, d, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return AttentionInputs(*(scale * rng.normal(size=(n, d)) for _ in range(3)))


def test_factored_scores_single_position():
    w = factored_scores(inputs(1, 4), alibi_slopes(8), 0)
    assert w.tolist() == [[1.0]]


def test_factored_scores_zero_qk_is_bias_softmax():
    n, d = 6, 4
    inp = AttentionInputs(np.zeros((n, d)), np.zeros((n, d)), np.ones((n, d)))
    slopes = alibi_slopes(8)
    w = factored_scores(inp, slopes, 0)
    for i in range(1, n + 1):
        b = harmonic_bias(i, slopes.slopes[0])
        e = np.exp(b - b.max())
        assert np.allclose(w[i - 1, :i], e / e.sum(), rtol=1e-14, atol=0)


def test_factored_scores_vanishing_slope_is_plain_rope():
    inp = inputs(12, 8, seed=3)
    tiny = factored_scores(inp, SlopeSet((1e-12,)), 0)
    plain = factored_scores(inp, SlopeSet((1e-12,)), 0, bias="none")
    assert np.abs(tiny - plain).max() <= 1e-9


def test_factored_scores_rows_and_mask():
    for seed in range(10):
        inp = inputs(17, 8, seed=seed, scale=2.0)
        for head in (0, 7):
            w = factored_scores(inp, alibi_slopes(8), head)
            assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12
            assert np.all(np.triu(w, 1) == 0)
    out = factored_attention(inputs(5, 4), alibi_slopes(8), 2)
    assert out.shape == (5, 4)


def test_factored_scores_errors():
    with pytest.raises(ShapeMismatch):
        AttentionInputs(np.ones((3, 4)), np.ones((2, 4)), np.ones((3, 4)))
    with pytest.raises(ShapeMismatch):
        factored_scores(inputs(3, 4), alibi_slopes(2), 2)
    with pytest.raises(OddDimension):
        factored_scores(inputs(3, 5), alibi_slopes(2), 0)


def test_bias_matrix_layout():
    B = bias_matrix(4, 1.0)
    assert B[3].tolist() == [-1.5, -1 / 3, -1 / 12, 0]
    assert np.isneginf(B[0, 1:]).all()
    assert bias_matrix(3, 0.5, "alibi")[2].tolist() == [-1, -0.5, 0]
