from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probopt.errors import DistanceOutOfRange, EmptyProbs, IndexOutOfRange, ShapeMismatch
from probopt.prflash import (
    BlockMask,
    BlockProbModel,
    SelectionParams,
    adjusted_sparsity,
    block_pdf,
    build_mask,
    check_mask,
    col_prob,
    compact_reshape,
    compacted_attention,
    decision_factor,
    dense_causal_attention,
    masked_attention,
    nearest_rank_percentile,
    row_prob,
    token_mask,
)


def model(M, k, B=4):
    return BlockProbModel(N=M * B, B_r=B, B_c=B, k=k)


def qkv(n, d=8, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.normal(size=(n, d)), rng.normal(size=(n, d))


def test_block_pdf_examples():
    m = model(10, 2)
    assert block_pdf(m, 1) == 1
    assert block_pdf(m, 4) == pytest.approx(1 / 6, rel=1e-15)
    assert sum(block_pdf(m, n) for n in range(3, 10)) == pytest.approx(7 / 8, abs=1e-15)
    with pytest.raises(DistanceOutOfRange):
        block_pdf(m, 10)
    with pytest.raises(DistanceOutOfRange):
        block_pdf(m, -1)


@given(st.integers(2, 300), st.data())
def test_tail_sum_identity(M, data):
    k = data.draw(st.integers(0, M - 2))
    m = model(M, k, B=1)
    tail = sum(block_pdf(m, n) for n in range(k + 1, M))
    assert abs(tail - (1 - 1 / (M - k))) <= 1e-12
    assert all(0 < block_pdf(m, n) <= 1 for n in range(M))


def test_model_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        BlockProbModel(N=16, B_r=4, B_c=4, k=4)
    assert BlockProbModel(N=10, B_r=4, B_c=2, k=0).M_blocks == 5


def exact_row_prob(M, k, q):
    f = lambda n: Fraction(1) if n <= k else Fraction(1, (n - k) * (n - k + 1))
    return sum(f(q - i) for i in range(q + 1)) / (q + 1)


def test_row_and_col_prob_examples():
    m = model(4, 1)
    assert row_prob(m, 0) == 1
    assert row_prob(m, 3) == pytest.approx(2 / 3, rel=1e-15)
    assert row_prob(m, 1) == 1
    assert col_prob(m, 3) == 1
    assert col_prob(m, 0) == pytest.approx(2 / 3, rel=1e-15)
    assert col_prob(m, 2) == 1
    with pytest.raises(IndexOutOfRange):
        row_prob(m, 4)
    with pytest.raises(IndexOutOfRange):
        col_prob(m, -1)


@given(st.integers(1, 40), st.data())
def test_row_prob_matches_rational_oracle(M, data):
    k = data.draw(st.integers(0, M - 1))
    q = data.draw(st.integers(0, M - 1))
    m = model(M, k, B=2)
    assert row_prob(m, q) == pytest.approx(float(exact_row_prob(M, k, q)), rel=1e-12)
    # a column's causal blocks see distances 0..M-1-c, the same multiset as row M-1-c
    assert col_prob(m, q) == pytest.approx(row_prob(m, M - 1 - q), rel=1e-12)


def test_decision_factor():
    assert decision_factor(0.37, SelectionParams(w=1, s=0), 0.9) == 0.37
    assert decision_factor(0.37, SelectionParams(w=0, s=0), 0.9) == 0.9
    assert decision_factor(0.6, SelectionParams(w=0.5, s=0), 0.2) == pytest.approx(0.4)


def test_adjusted_sparsity():
    probs = [0.9, 0.1, 0.5, 0.3, 0.7]
    assert adjusted_sparsity(probs, SelectionParams(w=0, s=30)) == pytest.approx(0.3)
    assert adjusted_sparsity(probs, SelectionParams(w=1, s=40)) == 0.3
    assert adjusted_sparsity([0.25] * 7, SelectionParams(w=1, s=83)) == 0.25
    with pytest.raises(EmptyProbs):
        adjusted_sparsity([], SelectionParams(w=1, s=10))


def test_nearest_rank():
    v = list(range(1, 11))
    assert nearest_rank_percentile(v, 0) == 1
    assert nearest_rank_percentile(v, 10) == 1
    assert nearest_rank_percentile(v, 11) == 2
    assert nearest_rank_percentile(v, 100) == 10


def test_params_validate():
    with pytest.raises(ValueError):
        SelectionParams(w=1.5, s=0)
    with pytest.raises(ValueError):
        SelectionParams(w=0.5, s=101)


def test_build_mask_no_drop():
    mask = build_mask(model(8, 1), SelectionParams(w=0, s=0, seed=3))
    assert mask.dropped_fraction == 0
    assert (mask.keep == np.tril(np.ones((8, 8), bool))).all()


def test_build_mask_degenerate_model_keeps_everything():
    for s in (0, 30, 99.9):
        mask = build_mask(model(6, 5), SelectionParams(w=1, s=s, seed=1))
        assert mask.dropped_fraction == 0


def test_build_mask_reproducible_and_seed_sensitive():
    m, p = model(32, 2), SelectionParams(w=0.3, s=50, seed=11)
    a, b = build_mask(m, p), build_mask(m, p)
    assert (a.keep == b.keep).all() and a.threshold == b.threshold
    others = [build_mask(m, SelectionParams(w=0.3, s=50, seed=s)).keep for s in range(5)]
    assert any((o != a.keep).any() for o in others)


def test_row_drop_rate_calibrated():
    m = model(40, 2)
    rates = [len(build_mask(m, SelectionParams(w=0, s=30, seed=s)).dropped_rows) / 40 for s in range(200)]
    assert abs(np.mean(rates) - 0.30) <= 0.05


def test_build_mask_needs_square_blocks():
    with pytest.raises(ShapeMismatch):
        build_mask(BlockProbModel(N=16, B_r=4, B_c=2, k=0), SelectionParams(w=0, s=10))


@settings(max_examples=200)
@given(st.integers(1, 30), st.floats(0, 1), st.floats(0, 100), st.integers(0, 2**31), st.data())
def test_mask_structure(M, w, s, seed, data):
    k = data.draw(st.integers(0, M - 1))
    mask = build_mask(model(M, k, B=2), SelectionParams(w=w, s=s, seed=seed))
    check_mask(mask)
    causal = M * (M + 1) // 2
    assert mask.dropped_fraction == pytest.approx(1 - mask.keep.sum() / causal)
    for q in mask.dropped_rows:
        assert mask.keep[q].sum() == 1
    for c in mask.dropped_cols:
        assert mask.keep[:, c].sum() == 1


def test_masked_attention_full_mask_is_exact():
    Q, K, V = qkv(37, seed=4)
    out, stats = masked_attention(Q, K, V, BlockMask.full(10, 4))
    exact = dense_causal_attention(Q, K, V)
    assert np.allclose(out, exact, rtol=1e-6, atol=1e-12)
    assert stats.max_abs_error < 1e-12 and stats.dropped_fraction == 0


def test_masked_attention_single_token():
    Q, K, V = qkv(1)
    out, _ = masked_attention(Q, K, V, BlockMask.full(1, 4))
    assert (out[0] == V[0]).all()


def test_masked_attention_one_block_dropped_matches_dense_oracle():
    n, B = 20, 4
    Q, K, V = qkv(n, seed=9)
    keep = np.tril(np.ones((5, 5), bool))
    keep[3, 1] = False
    mask = BlockMask(keep, (), (), 0.0, B)
    out, stats = masked_attention(Q, K, V, mask)
    ref = dense_causal_attention(Q, K, V, extra_mask=token_mask(mask, n))
    exact = dense_causal_attention(Q, K, V)
    assert np.allclose(out, ref, rtol=1e-10, atol=1e-12)
    assert stats.max_abs_error == pytest.approx(np.abs(ref - exact).max(), rel=1e-8)
    assert stats.max_abs_error > 0
    # only block-row 3 changes
    assert np.abs(out[:12] - exact[:12]).max() < 1e-12
    assert stats.dropped_fraction == pytest.approx(1 / 15)


def test_masked_attention_shape_checks():
    Q, K, V = qkv(8)
    with pytest.raises(ShapeMismatch):
        masked_attention(Q, K[:, :4], V, BlockMask.full(2, 4))
    with pytest.raises(ShapeMismatch):
        masked_attention(Q, K, V, BlockMask.full(3, 4))


def test_compact_maps():
    row_map, col_map = compact_reshape(BlockMask.full(4, 2))
    assert row_map == {i: i for i in range(4)} and col_map == {i: i for i in range(4)}
    keep = np.tril(np.ones((3, 3), bool))
    keep[1, 0] = False
    mask = BlockMask(keep, (1,), (), 0.0, 2)
    row_map, _ = compact_reshape(mask)
    assert row_map == {0: 0, 2: 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.floats(0, 1), st.floats(0, 100), st.integers(0, 1000))
def test_compacted_path_matches_masked_attention(M, B, w, s, seed):
    m = BlockProbModel(N=M * B, B_r=B, B_c=B, k=0)
    mask = build_mask(m, SelectionParams(w=w, s=s, seed=seed))
    n = M * B - (seed % B)  # ragged final block
    n = max(n, (M - 1) * B + 1)
    Q, K, V = qkv(n, d=6, seed=seed)
    out, _ = masked_attention(Q, K, V, mask)
    compact = compacted_attention(Q, K, V, mask)
    kept_rows = set(mask.kept_rows)
    assert set(compact) == {i for i in range(n) if i // B in kept_rows}
    for i, row in compact.items():
        assert np.abs(row - out[i]).max() <= 1e-12
