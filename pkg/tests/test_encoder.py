import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgv import encoder as enc
from tgv.errors import FormatError, InvalidDim, NonFiniteInput, ShapeMismatch, StaleCache


def small_config(seed=0, **kw):
    base = dict(input_dim=5, encoder_hidden_dims=(7,), embedding_dim=4, projection_dim=3, seed=seed)
    base.update(kw)
    return enc.EncoderConfig(**base)


def numeric_grad(f, params, eps=1e-5):
    out = []
    for k, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            hi = [q.copy() for q in params]
            lo = [q.copy() for q in params]
            hi[k][idx] += eps
            lo[k][idx] -= eps
            g[idx] = (f(hi) - f(lo)) / (2 * eps)
        out.append(g)
    return out


class TestConfig:
    def test_projection_hidden_defaults_to_embedding(self):
        cfg = enc.EncoderConfig(input_dim=10, embedding_dim=6)
        assert cfg.projection_hidden_dim == 6
        assert cfg.layer_shapes() == [(10, 128), (128, 6), (6, 6), (6, 32)]

    def test_rejects_zero_dim(self):
        with pytest.raises(InvalidDim):
            enc.EncoderConfig(input_dim=0)


class TestInit:
    def test_same_seed_identical(self):
        a, b = enc.init(small_config()), enc.init(small_config())
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_array_equal(p, q)

    def test_seed_changes_weights(self):
        a, b = enc.init(small_config(0)), enc.init(small_config(1))
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_biases_zero_and_fan_in_bound(self):
        state = enc.init(small_config())
        for w, b in zip(state.weights, state.biases):
            assert np.all(b == 0.0)
            assert np.abs(w).max() <= np.sqrt(6.0 / w.shape[0])


class TestForward:
    def test_zero_weights_zero_input(self):
        state = enc.init(small_config())
        state = state.with_params([np.zeros_like(p) for p in state.params()])
        v, z, _ = enc.forward(state, np.zeros((2, 5)))
        np.testing.assert_array_equal(v, 0.0)
        np.testing.assert_array_equal(z, 0.0)

    def test_identity_layer(self):
        cfg = enc.EncoderConfig(input_dim=3, encoder_hidden_dims=(), embedding_dim=3, projection_dim=2)
        state = enc.init(cfg)
        params = state.params()
        params[0] = np.eye(3)
        state = state.with_params(params)
        v, _, _ = enc.forward(state, np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_array_equal(v, [[1.0, 0.0, 0.0]])

    def test_duplicate_rows(self):
        state = enc.init(small_config())
        x = np.random.default_rng(0).normal(size=(1, 5))
        v, z, _ = enc.forward(state, np.vstack([x, x]))
        np.testing.assert_array_equal(v[0], v[1])
        np.testing.assert_array_equal(z[0], z[1])

    def test_embed_matches_forward(self):
        state = enc.init(small_config())
        x = np.random.default_rng(1).normal(size=(6, 5))
        np.testing.assert_array_equal(enc.embed(state, x), enc.forward(state, x)[0])

    def test_shapes(self):
        v, z, _ = enc.forward(enc.init(small_config()), np.ones((4, 5)))
        assert v.shape == (4, 4) and z.shape == (4, 3)

    def test_rejects_wrong_width(self):
        with pytest.raises(ShapeMismatch):
            enc.embed(enc.init(small_config()), np.ones((2, 4)))

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteInput):
            enc.embed(enc.init(small_config()), np.full((2, 5), np.nan))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        state = enc.init(small_config())
        _, _, cache = enc.forward(state, np.ones((3, 5)))
        grads, grad_x = enc.backward(state, cache, np.zeros((3, 3)))
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(grad_x, 0.0)

    def test_single_linear_layer_sum_loss(self):
        cfg = enc.EncoderConfig(input_dim=3, encoder_hidden_dims=(), embedding_dim=2, projection_dim=2)
        state = enc.init(cfg)
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        _, _, cache = enc.forward(state, x)
        # loss = sum(v) enters at the embedding; dL/dW[i, j] = sum_n x[n, i]
        grads, _ = enc.backward(state, cache, grad_v=np.ones((2, 2)))
        np.testing.assert_array_equal(grads[0], np.outer(x.sum(axis=0), np.ones(2)))
        np.testing.assert_array_equal(grads[1], [2.0, 2.0])
        for g in grads[2:]:
            np.testing.assert_array_equal(g, 0.0)

    def test_stale_cache(self):
        state = enc.init(small_config())
        _, _, cache = enc.forward(state, np.ones((2, 5)))
        other = state.copy()
        with pytest.raises(StaleCache):
            enc.backward(other, cache, np.ones((2, 3)))

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        cfg = small_config(seed=seed % 1000)
        state = enc.init(cfg)
        # non-zero biases keep pre-activations off the ReLU kink at exactly 0
        state = state.with_params([p if p.ndim == 2 else rng.normal(0, 0.1, size=p.shape) for p in state.params()])
        x = rng.normal(size=(4, 5))
        cz, cv = rng.normal(size=(4, 3)), rng.normal(size=(4, 4))

        def f(params):
            v, z, _ = enc.forward(state.with_params(params), x)
            return float((cz * z).sum() + (cv * v).sum())

        s = state
        _, _, cache = enc.forward(s, x)
        grads, grad_x = enc.backward(s, cache, grad_z=cz, grad_v=cv)
        for a, b in zip(grads, numeric_grad(f, s.params())):
            np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-7)

        def fx(xs):
            v, z, _ = enc.forward(s, xs[0])
            return float((cz * z).sum() + (cv * v).sum())

        np.testing.assert_allclose(grad_x, numeric_grad(fx, [x])[0], rtol=1e-5, atol=1e-7)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        state = enc.init(small_config(seed=3))
        enc.save_checkpoint(state, tmp_path / "w.tgvw")
        loaded = enc.load_checkpoint(tmp_path / "w.tgvw")
        assert loaded.config == state.config
        for p, q in zip(loaded.params(), state.params()):
            np.testing.assert_array_equal(p, q)

    def test_bytes_deterministic(self, tmp_path):
        for name in ("a", "b"):
            enc.save_checkpoint(enc.init(small_config()), tmp_path / name)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(FormatError):
            enc.load_checkpoint(tmp_path / "x")

    def test_truncated(self, tmp_path):
        enc.save_checkpoint(enc.init(small_config()), tmp_path / "w")
        data = (tmp_path / "w").read_bytes()
        (tmp_path / "w").write_bytes(data[:-8])
        with pytest.raises(FormatError):
            enc.load_checkpoint(tmp_path / "w")
