import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidpack.lora import (
    LoraAdapter,
    ShapeMismatchError,
    ToyAttention,
    attention_adapter_gradients,
    attention_forward,
    gradient_check_lora,
    lora_forward,
    merge_lora,
)
from vidpack.numerics import SquaredError, ZeroLoss


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def trained_adapter(d_in, d_out, r, alpha, seed):
    rng = np.random.default_rng(seed)
    ad = LoraAdapter.init(d_in, d_out, r, alpha, seed)
    ad.B[:] = rng.normal(0, 0.3, size=ad.B.shape)
    return ad


class TestAdapter:
    def test_defaults(self):
        ad = LoraAdapter.init(128, 128)
        assert (ad.r, ad.alpha, ad.scaling) == (64, 16.0, 0.25)
        assert ad.A.shape == (64, 128) and ad.B.shape == (128, 64)
        assert not ad.B.any()
        assert abs(ad.A.std() - 0.02) < 0.002

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            LoraAdapter.init(4, 4, r=0)
        with pytest.raises(ShapeMismatchError):
            LoraAdapter(np.ones((2, 4)), np.ones((4, 3)))


class TestForward:
    def test_zero_b_is_bitwise_noop(self):
        rng = np.random.default_rng(0)
        W = rng.normal(size=(6, 5))
        x = rng.normal(size=(7, 5))
        out = lora_forward(LoraAdapter.init(5, 6, r=4, seed=1), W, x)
        assert out.tobytes() == (x @ W.T).tobytes()

    def test_hand_computed_rank_one(self):
        # B·A = [[3],[4]]·[[1,2]] = [[3,6],[4,8]]; x·(BA)^T for x=[1,1] -> [9,12], x=[1,0] -> [3,4]
        ad = LoraAdapter(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]), alpha=1.0)
        out = lora_forward(ad, np.zeros((2, 2)), np.array([[1.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_array_equal(out, [[9.0, 12.0], [3.0, 4.0]])

    def test_doubling_alpha_doubles_contribution(self):
        rng = np.random.default_rng(2)
        W, x = rng.normal(size=(4, 4)), rng.normal(size=(3, 4))
        a1 = trained_adapter(4, 4, 2, 8.0, 3)
        a2 = LoraAdapter(a1.A, a1.B, 16.0)
        base = x @ W.T
        np.testing.assert_allclose(lora_forward(a2, W, x) - base, 2 * (lora_forward(a1, W, x) - base), rtol=1e-12)

    def test_shape_mismatch(self):
        ad = LoraAdapter.init(4, 4, r=2)
        with pytest.raises(ShapeMismatchError):
            lora_forward(ad, np.zeros((4, 5)), np.zeros((1, 4)))
        with pytest.raises(ShapeMismatchError):
            lora_forward(ad, np.zeros((4, 4)), np.zeros((1, 3)))


class TestMerge:
    def test_zero_b(self):
        W = np.random.default_rng(0).normal(size=(4, 4))
        assert (merge_lora(LoraAdapter.init(4, 4, r=2), W) == W).all()

    def test_identity_composition(self):
        W = np.random.default_rng(1).normal(size=(3, 3))
        ad = LoraAdapter(np.eye(3), np.eye(3), alpha=6.0)
        np.testing.assert_allclose(merge_lora(ad, W), W + 2.0 * np.eye(3), rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_forward_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        ad = trained_adapter(8, 6, 4, 16.0, seed)
        W = rng.normal(size=(6, 8))
        merged = merge_lora(ad, W)
        for _ in range(100):
            x = rng.normal(size=(1, 8))
            assert rel(lora_forward(ad, W, x), x @ merged.T) < 1e-10

    @settings(max_examples=50)
    @given(st.integers(1, 6), st.integers(1, 10), st.integers(1, 10), st.floats(0.5, 64), st.integers(0, 10_000))
    def test_merge_property(self, r, d_in, d_out, alpha, seed):
        rng = np.random.default_rng(seed)
        ad = trained_adapter(d_in, d_out, r, alpha, seed)
        W = rng.normal(size=(d_out, d_in))
        x = rng.normal(size=(5, d_in))
        assert rel(lora_forward(ad, W, x), x @ merge_lora(ad, W).T) < 1e-10


def plain_attention(att, x):
    """Adapter-free oracle with an explicit per-row softmax."""
    q, k, v = x @ att.W_q.T, x @ att.W_k.T, x @ att.W_v.T
    rows = []
    for i in range(len(x)):
        scores = [float(q[i] @ k[j]) / math.sqrt(att.d_model) for j in range(len(x))]
        m = max(scores)
        e = [math.exp(s - m) for s in scores]
        z = sum(e)
        rows.append(sum((e[j] / z) * v[j] for j in range(len(x))))
    return np.array(rows) @ att.W_o.T


class TestAttention:
    def test_single_token(self):
        att = ToyAttention.init(4, r=2, seed=0)
        x = np.random.default_rng(0).normal(size=(1, 4))
        out, P = attention_forward(att, x, return_weights=True)
        assert P.tolist() == [[1.0]]
        np.testing.assert_allclose(out, (x @ att.W_v.T) @ att.W_o.T, rtol=1e-12)

    def test_zero_adapters_match_plain_attention(self):
        att = ToyAttention.init(6, r=3, seed=1)
        x = np.random.default_rng(1).normal(size=(5, 6))
        np.testing.assert_allclose(attention_forward(att, x), plain_attention(att, x), rtol=1e-10, atol=1e-12)

    @settings(max_examples=50)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
    def test_softmax_rows_normalized(self, n, d, seed):
        att = ToyAttention.init(d, r=2, seed=seed)
        x = np.random.default_rng(seed).normal(size=(n, d)) * 3
        _, P = attention_forward(att, x, return_weights=True)
        assert np.all(np.abs(P.sum(axis=1) - 1.0) <= 1e-12)

    def test_base_weights_frozen(self):
        att = ToyAttention.init(4, r=2)
        with pytest.raises(ValueError):
            att.W_q[0, 0] = 1.0

    def test_census(self):
        att = ToyAttention.init(16, r=4)
        assert att.num_trainable() == 2 * (4 * 16 + 16 * 4)
        names = set(att.trainable_parameters())
        assert names == {"q.A", "q.B", "v.A", "v.B"}
        assert not names & set(att.frozen_parameters())

    def test_paper_preset_shapes(self):
        att = ToyAttention.init(128, r=64, alpha=16)
        assert att.adapter_q.scaling == 0.25 and att.adapter_v.scaling == 0.25
        assert att.adapter_q.A.shape == (64, 128) and att.adapter_v.B.shape == (128, 64)
        assert att.num_trainable() == 2 * (64 * 128 + 128 * 64)


def _gradcheck_layer(seed, d=4, r=2, n=3):
    rng = np.random.default_rng(seed)
    att = ToyAttention.init(d, r=r, alpha=2.0 * r, seed=seed)
    att.adapter_q.B[:] = rng.normal(0, 0.5, size=att.adapter_q.B.shape)
    att.adapter_v.B[:] = rng.normal(0, 0.5, size=att.adapter_v.B.shape)
    return att, rng.normal(size=(n, d)), rng.normal(size=(n, d))


class TestGradientCheck:
    def test_squared_error(self):
        att, x, t = _gradcheck_layer(0)
        rep = gradient_check_lora(att, x, SquaredError(t))
        assert rep.max_adapter_grad_error < 1e-4
        assert rep.base_grads_all_zero

    def test_independent_loss_gives_zero_gradients(self):
        att, x, _ = _gradcheck_layer(1)
        _, grads = attention_adapter_gradients(att, x, ZeroLoss())
        assert all(not g.any() for g in grads.values())
        assert gradient_check_lora(att, x, ZeroLoss()).max_adapter_grad_error == 0.0

    def test_base_weight_affects_loss_but_is_not_trainable(self):
        att, x, t = _gradcheck_layer(2)
        loss = SquaredError(t)
        before = loss.value(attention_forward(att, x))
        W_q = att.W_q.copy()
        W_q[0, 0] += 0.1
        bumped = ToyAttention(W_q, att.W_k, att.W_v, att.W_o, att.adapter_q, att.adapter_v)
        assert loss.value(attention_forward(bumped, x)) != before
        rep = gradient_check_lora(att, x, loss)
        assert rep.base_grads_all_zero and "W_q" not in rep.trainable

    @pytest.mark.parametrize("seed", range(20))
    def test_many_seeds(self, seed):
        att, x, t = _gradcheck_layer(50 + seed, d=1 + seed % 8, r=1 + seed % 3, n=1 + seed % 4)
        assert gradient_check_lora(att, x, SquaredError(t)).max_adapter_grad_error < 1e-4
