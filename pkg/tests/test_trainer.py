import numpy as np
import pytest

from tgv import encoder as enc
from tgv.errors import InsufficientData, InvalidConfig, ShapeMismatch
from tgv.synthdata import SynthConfig, generate
from tgv.tabular import encode_batch, fit_schema
from tgv.trainer import AdamState, Optimizer, TrainConfig, adam_step, batches, sgd_step, train


@pytest.fixture(scope="module")
def default_data():
    ds = generate(SynthConfig())
    records = ds.records()
    return ds.images, encode_batch(records, fit_schema(records))


@pytest.fixture(scope="module")
def small_data():
    ds = generate(SynthConfig(n_samples=200, feature_dim=12, seed=4))
    records = ds.records()
    return ds.images, encode_batch(records, fit_schema(records))


def small_encoder(seed=0):
    return enc.EncoderConfig(input_dim=12, encoder_hidden_dims=(32,), embedding_dim=16, projection_dim=8, seed=seed)


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        p = [np.array([1.0, -2.0])]
        moments = AdamState([np.array([0.5, 0.5])], [np.array([0.1, 0.1])], t=3)
        new, m = adam_step(p, [np.zeros(2)], moments, lr=0.1)
        np.testing.assert_allclose(new[0], p[0] - 0.1 * (0.45 / (1 - 0.9**4)) / (np.sqrt(0.0999 / (1 - 0.999**4)) + 1e-8))
        np.testing.assert_allclose(m.m[0], [0.45, 0.45])
        np.testing.assert_allclose(m.v[0], [0.0999, 0.0999])

    def test_zero_gradient_from_fresh_moments(self):
        p = [np.array([1.0, -2.0])]
        new, m = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), lr=0.1)
        np.testing.assert_array_equal(new[0], p[0])
        assert m.t == 1

    def test_first_step_is_sign_scaled(self):
        g = np.array([3.0, -0.02, 1e3])
        new, _ = adam_step([np.zeros(3)], [g], AdamState.zeros_like([g]), lr=0.01)
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(new[0], expected, rtol=1e-12)
        np.testing.assert_allclose(np.abs(new[0]), 0.01, rtol=1e-6)

    def test_stateful(self):
        p, g = [np.array([1.0])], [np.array([0.5])]
        two, m = adam_step(p, g, AdamState.zeros_like(p), lr=0.1)
        two, _ = adam_step(two, g, m, lr=0.1)
        one, _ = adam_step(p, g, AdamState.zeros_like(p), lr=0.2)
        assert not np.array_equal(two[0], one[0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]), lr=0.1)


class TestSgdAndOptimizer:
    def test_sgd(self):
        np.testing.assert_allclose(sgd_step([np.array([1.0, 2.0])], [np.array([1.0, -1.0])], 0.5)[0], [0.5, 2.5])

    def test_optimizer_dispatch(self):
        p = [np.ones(2)]
        assert Optimizer(p, "sgd", 0.1).step(p, [np.ones(2)])[0].tolist() == [0.9, 0.9]
        opt = Optimizer(p, "adam", 0.1)
        opt.step(p, [np.ones(2)])
        assert opt.moments.t == 1


class TestBatches:
    def test_covers_and_drops_singleton_tail(self):
        idx = list(batches(9, 4, np.random.default_rng(0)))
        assert [len(b) for b in idx] == [4, 4]
        assert len(set(np.concatenate(idx))) == 8

    def test_keeps_tail_of_two(self):
        assert [len(b) for b in batches(10, 4, np.random.default_rng(0))] == [4, 4, 2]


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [dict(epochs=0), dict(batch_size=1), dict(learning_rate=-1.0),
                                    dict(optimizer="rmsprop"), dict(pairing_mode="x"), dict(lam=1.5),
                                    dict(threshold=-0.1)])
    def test_rejects(self, kw):
        with pytest.raises(InvalidConfig):
            TrainConfig(**kw)


class TestTrain:
    def test_zero_learning_rate_keeps_state(self, small_data):
        images, tab = small_data
        init = enc.init(small_encoder())
        report = train(images, TrainConfig(epochs=1, learning_rate=0.0, batch_size=32), tab, state=init)
        for p, q in zip(report.state.params(), init.params()):
            np.testing.assert_array_equal(p, q)

    def test_deterministic(self, small_data):
        images, tab = small_data
        cfg = TrainConfig(epochs=2, batch_size=32)
        a = train(images, cfg, tab, encoder_config=small_encoder())
        b = train(images, cfg, tab, encoder_config=small_encoder())
        assert a.loss_history == b.loss_history
        for p, q in zip(a.state.params(), b.state.params()):
            np.testing.assert_array_equal(p, q)
        assert a.to_dict() == b.to_dict()

    @pytest.mark.parametrize("optimizer", ["adam", "sgd"])
    @pytest.mark.parametrize("mode", ["tabular", "augmentation"])
    def test_modes_run(self, small_data, optimizer, mode):
        images, tab = small_data
        cfg = TrainConfig(epochs=1, batch_size=50, optimizer=optimizer, pairing_mode=mode)
        report = train(images, cfg, tab if mode == "tabular" else None, encoder_config=small_encoder())
        assert report.steps == 4 and np.isfinite(report.loss_history[0])

    def test_tabular_mode_needs_attributes(self, small_data):
        with pytest.raises(InsufficientData):
            train(small_data[0], TrainConfig(batch_size=32))

    def test_tabular_row_count(self, small_data):
        images, tab = small_data
        with pytest.raises(ShapeMismatch):
            train(images[:100], TrainConfig(batch_size=32), tab)

    def test_batch_larger_than_data(self, small_data):
        with pytest.raises(InsufficientData):
            train(small_data[0][:10], TrainConfig(batch_size=32), small_data[1].take(np.arange(10)))

    def test_loss_decreases_on_default_data(self, default_data):
        images, tab = default_data
        report = train(images, TrainConfig(), tab)
        assert len(report.loss_history) == 10
        assert report.loss_history[-1] < report.loss_history[0]
