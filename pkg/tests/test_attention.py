import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echonav import tensor as tc
from echonav.attention import (AttentionParams, FusionConfig, ffn, guided_attention_block, mhga,
                               self_attention, self_attention_traced)
from echonav.errors import ConfigError, ShapeError
from echonav.tensor import Tensor
from oracles import naive_mhga


def layer_norm_np(x, g, b, eps):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def zero_params(cfg):
    p = AttentionParams.init(cfg, np.random.default_rng(0))
    for name, t in p.named():
        if not name.startswith("ln"):
            t.data = np.zeros_like(t.data)
    return p


class TestFusionConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            FusionConfig(d=10, h=4)

    @pytest.mark.parametrize("field", ["d", "h", "d_ff", "T", "N"])
    def test_positive(self, field):
        with pytest.raises(ConfigError):
            FusionConfig(**{field: 0})

    def test_scale_choice(self):
        assert FusionConfig(d=16, h=4).scale == 4.0
        assert FusionConfig(d=16, h=4, per_head_scale=True).scale == 2.0


class TestMHGA:
    def test_matches_naive_oracle(self):
        cfg = FusionConfig(d=4, h=2, d_ff=6, T=2, N=2)
        rng = np.random.default_rng(11)
        p = AttentionParams.init(cfg, rng)
        V, A = rng.normal(size=(1, 2, 4)), rng.normal(size=(1, 2, 4))
        np.testing.assert_allclose(mhga(Tensor(V), Tensor(A), p, cfg).data, naive_mhga(V, A, p, 4, 2),
                                   rtol=0, atol=1e-12)

    def test_single_key_broadcasts_values(self, rng):
        cfg = FusionConfig(d=8, h=2, d_ff=4, T=1, N=3)
        p = AttentionParams.init(cfg, rng)
        V, A = rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 1, 8))
        expected = np.broadcast_to((A @ p.wv.data) @ p.wo.data, (2, 3, 8))
        np.testing.assert_allclose(mhga(Tensor(V), Tensor(A), p, cfg).data, expected, atol=1e-13)

    def test_zero_output_projection(self, small_fusion, small_params, rng):
        small_params.wo.data[:] = 0.0
        out = mhga(Tensor(rng.normal(size=(2, 4, 8))), Tensor(rng.normal(size=(2, 3, 8))), small_params, small_fusion)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_shape_mismatch(self, small_fusion, small_params):
        with pytest.raises(ShapeError):
            mhga(Tensor(np.ones((1, 5, 8))), Tensor(np.ones((1, 3, 8))), small_params, small_fusion)
        with pytest.raises(ShapeError):
            mhga(Tensor(np.ones((1, 4, 8))), Tensor(np.ones((1, 3, 6))), small_params, small_fusion)


class TestGuidedAttentionBlock:
    def test_residual_paths_only(self, small_fusion, rng):
        p = zero_params(small_fusion)
        V = rng.normal(size=(2, 4, 8))
        out, _ = guided_attention_block(Tensor(V), Tensor(rng.normal(size=(2, 3, 8))), p, small_fusion)
        eps = small_fusion.ln_eps
        once = layer_norm_np(V, 1.0, 0.0, eps)
        np.testing.assert_allclose(out.data, layer_norm_np(once, 1.0, 0.0, eps), atol=1e-12)

    def test_composition(self, small_fusion, small_params, rng):
        V, A = rng.normal(size=(2, 4, 8)), rng.normal(size=(2, 3, 8))
        p, eps = small_params, small_fusion.ln_eps
        for t in (p.b1, p.b2, p.ln1_b, p.ln2_g):
            t.data = rng.normal(size=t.shape)
        vt = layer_norm_np(V + naive_mhga(V, A, p, 8, 2), p.ln1_g.data, p.ln1_b.data, eps)
        z = np.maximum(vt @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data
        expected = layer_norm_np(vt + z, p.ln2_g.data, p.ln2_b.data, eps)
        out, trace = guided_attention_block(Tensor(V), Tensor(A), p, small_fusion)
        np.testing.assert_allclose(out.data, expected, atol=1e-11)
        assert trace.weights.shape == (2, 2, 4, 3)

    def test_ffn_formula(self, small_params, rng):
        Z = rng.normal(size=(3, 8))
        p = small_params
        expected = np.maximum(Z @ p.w1.data + p.b1.data, 0) @ p.w2.data + p.b2.data
        np.testing.assert_allclose(ffn(Tensor(Z), p).data, expected, atol=1e-14)

    def test_audio_queries_variant_returns_audio_shape(self, rng):
        cfg = FusionConfig(d=8, h=2, d_ff=4, T=3, N=4, audio_queries=True)
        p = AttentionParams.init(cfg, rng)
        out, trace = guided_attention_block(Tensor(rng.normal(size=(1, 4, 8))), Tensor(rng.normal(size=(1, 3, 8))),
                                            p, cfg)
        assert out.shape == (1, 3, 8) and trace.weights.shape == (1, 2, 3, 4)

    def test_gradients(self, small_fusion, small_params, rng):
        V = Tensor(rng.normal(size=(2, 4, 8)), requires_grad=True)
        A = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
        w = rng.normal(size=(2, 4, 8))
        loss = lambda: (guided_attention_block(V, A, small_params, small_fusion)[0] * w).sum()
        tensors = [V, A] + [t for _, t in small_params.named()]
        assert tc.grad_check_all(loss, tensors) < 1e-5


class TestSelfAttention:
    def test_single_position(self, rng):
        cfg = FusionConfig(d=8, h=2, d_ff=4, T=1, N=1)
        p = AttentionParams.init(cfg, rng)
        X = rng.normal(size=(2, 1, 8))
        out, trace = self_attention_traced(Tensor(X), p, cfg)
        np.testing.assert_array_equal(trace.weights, 1.0)
        mid = layer_norm_np(X + (X @ p.wv.data) @ p.wo.data, 1.0, 0.0, cfg.ln_eps)
        z = np.maximum(mid @ p.w1.data, 0) @ p.w2.data
        np.testing.assert_allclose(out.data, layer_norm_np(mid + z, 1.0, 0.0, cfg.ln_eps), atol=1e-12)

    def test_permutation_equivariance(self, small_fusion, small_params, rng):
        X = rng.normal(size=(2, 5, 8))
        perm = rng.permutation(5)
        a = self_attention(Tensor(X), small_params, small_fusion).data
        b = self_attention(Tensor(X[:, perm]), small_params, small_fusion).data
        np.testing.assert_allclose(b, a[:, perm], rtol=0, atol=1e-12)

    def test_gradient(self, small_fusion, small_params, rng):
        X = Tensor(rng.normal(size=(1, 3, 8)), requires_grad=True)
        w = rng.normal(size=(1, 3, 8))
        assert tc.grad_check(lambda t: (self_attention(t, small_params, small_fusion) * w).sum(), X) < 1e-5

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_trace_rows_sum_to_one(self, seed, L):
        r = np.random.default_rng(seed)
        cfg = FusionConfig(d=8, h=4, d_ff=4, T=L, N=L)
        p = AttentionParams.init(cfg, r)
        _, trace = self_attention_traced(Tensor(r.normal(size=(2, L, 8)) * 5), p, cfg)
        assert np.all(np.abs(trace.row_sums() - 1.0) <= 1e-9)


class TestFFN:
    def test_constant_bias_only(self, small_params, rng):
        p = small_params
        p.w1.data[:] = 0.0
        p.w2.data[:] = 0.0
        c = rng.normal(size=8)
        p.b2.data = c
        np.testing.assert_array_equal(ffn(Tensor(rng.normal(size=(2, 3, 8))), p).data, np.broadcast_to(c, (2, 3, 8)))

    def test_dead_relu_leaves_bias(self, small_params, rng):
        p = small_params
        p.b1.data = np.full(p.b1.shape, -1e3)
        p.b2.data = rng.normal(size=8)
        out = ffn(Tensor(rng.uniform(-1, 1, size=(4, 8))), p).data
        np.testing.assert_array_equal(out, np.broadcast_to(p.b2.data, (4, 8)))

    def test_gradient(self, small_params, rng):
        w = rng.normal(size=(3, 8))
        assert tc.grad_check(lambda t: (ffn(t, small_params) * w).sum(),
                             Tensor(rng.normal(size=(3, 8)), requires_grad=True)) < 1e-5

    def test_shape_error(self, small_params):
        with pytest.raises(ShapeError):
            ffn(Tensor(np.ones((2, 5))), small_params)


class TestPermutationProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_audio_frame_permutation_invariance(self, seed):
        r = np.random.default_rng(seed)
        cfg = FusionConfig(d=8, h=2, d_ff=6, T=5, N=4)
        p = AttentionParams.init(cfg, r)
        V, A = r.normal(size=(2, 4, 8)), r.normal(size=(2, 5, 8))
        perm = r.permutation(5)
        a = mhga(Tensor(V), Tensor(A), p, cfg).data
        b = mhga(Tensor(V), Tensor(A[:, perm]), p, cfg).data
        np.testing.assert_allclose(b, a, rtol=0, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_visual_region_permutation_equivariance(self, seed):
        r = np.random.default_rng(seed)
        cfg = FusionConfig(d=8, h=2, d_ff=6, T=3, N=6)
        p = AttentionParams.init(cfg, r)
        V, A = r.normal(size=(2, 6, 8)), r.normal(size=(2, 3, 8))
        perm = r.permutation(6)
        a, _ = guided_attention_block(Tensor(V), Tensor(A), p, cfg)
        b, _ = guided_attention_block(Tensor(V[:, perm]), Tensor(A), p, cfg)
        # rows are computed independently, so the permuted result is bit-identical
        np.testing.assert_array_equal(b.data, a.data[:, perm])


@pytest.mark.parametrize("B,N,T,d,h", [(1, 1, 1, 4, 1), (2, 4, 3, 8, 2), (3, 9, 5, 12, 3), (1, 16, 8, 16, 4)])
def test_shape_contract(B, N, T, d, h):
    cfg = FusionConfig(d=d, h=h, d_ff=5, T=T, N=N)
    r = np.random.default_rng(B * 100 + N)
    out, trace = guided_attention_block(Tensor(r.normal(size=(B, N, d))), Tensor(r.normal(size=(B, T, d))),
                                        AttentionParams.init(cfg, r), cfg)
    assert out.shape == (B, N, d)
    assert trace.weights.shape == (B, h, N, T)
    assert np.all(trace.weights >= 0)
    assert np.all(np.abs(trace.row_sums() - 1) <= 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 5.0))
def test_scaling_sharpens_attention(seed, s):
    r = np.random.default_rng(seed)
    cfg = FusionConfig(d=4, h=1, d_ff=2, T=4, N=3)
    p = AttentionParams.init(cfg, r)
    for t in (p.wq, p.wk, p.wv):
        t.data = np.eye(4)
    V, A = r.normal(size=(1, 3, 4)), r.normal(size=(1, 4, 4))
    _, base = guided_attention_block(Tensor(V), Tensor(A), p, cfg)
    _, sharp = guided_attention_block(Tensor(V * s), Tensor(A * s), p, cfg)
    assert np.all(sharp.weights.max(axis=-1) >= base.weights.max(axis=-1) - 1e-12)
