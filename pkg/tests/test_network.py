import numpy as np
import numpy.testing as npt
import pytest

from gehan_aft.checks import network_gradient_error
from gehan_aft.dataset import CATEGORICAL, NUMERIC, FeatureSchema
from gehan_aft.network import NetworkConfig, NetworkModel, default_embedding_dims


@pytest.fixture
def schema():
    return FeatureSchema(("a", "b", "k", "m"), (NUMERIC, NUMERIC, CATEGORICAL, CATEGORICAL),
                         (("x", "y", "z", "w", "v"), ("p",)))


def _batch(rng, n=12):
    return rng.standard_normal((n, 2)), np.column_stack([rng.integers(0, 5, n), np.zeros(n, int)])


class TestStructure:
    def test_embedding_dims(self, schema):
        assert default_embedding_dims((5, 1, 8)) == (2, 1, 4)
        model = NetworkModel(NetworkConfig(num_layers=1, nodes_per_layer=4), schema)
        # One extra row per table for unseen levels.
        assert model.params["embed.0"].shape == (6, 2)
        assert model.params["embed.1"].shape == (2, 1)
        assert model.input_width == 2 + 2 + 1

    def test_output_has_no_bias(self, schema):
        model = NetworkModel(NetworkConfig(num_layers=2, nodes_per_layer=4), schema)
        assert model.params["output.weight"].shape == (4, 1)
        assert not any(k.startswith("output.") and k != "output.weight" for k in model.params)

    def test_zero_layers_is_linear(self, rng):
        schema = FeatureSchema.numeric(["a", "b", "c"])
        model = NetworkModel(NetworkConfig(num_layers=0), schema).eval()
        x = rng.standard_normal((7, 3))
        npt.assert_allclose(model(x), x @ model.params["output.weight"].ravel())

    def test_no_batch_norm_params(self, schema):
        model = NetworkModel(NetworkConfig(num_layers=2, use_batch_norm=False), schema)
        assert not any(k.startswith("bn.") for k in model.params)
        assert model.buffers == {}

    def test_seeded_init(self, schema):
        a = NetworkModel(NetworkConfig(seed=3), schema)
        b = NetworkModel(NetworkConfig(seed=3), schema)
        for k in a.params:
            npt.assert_array_equal(a.params[k], b.params[k])

    @pytest.mark.parametrize("kwargs", [dict(num_layers=-1), dict(nodes_per_layer=0),
                                        dict(dropout_rate=1.0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            NetworkConfig(**kwargs)

    def test_config_round_trip(self):
        cfg = NetworkConfig(num_layers=3, embedding_dims=(2, 1))
        assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


class TestForward:
    def test_shape_and_modes(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=2, nodes_per_layer=8, dropout_rate=0.5), schema)
        x_num, x_cat = _batch(rng)
        assert model.train()(x_num, x_cat).shape == (12,)
        ev1 = model.eval()(x_num, x_cat)
        ev2 = model(x_num, x_cat)
        npt.assert_array_equal(ev1, ev2)

    def test_eval_is_row_independent(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=2, nodes_per_layer=8), schema).eval()
        x_num, x_cat = _batch(rng)
        full = model(x_num, x_cat)
        single = np.array([model(x_num[i:i + 1], x_cat[i:i + 1])[0] for i in range(12)])
        npt.assert_allclose(single, full, rtol=1e-12)

    def test_running_stats_update(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=1, nodes_per_layer=4, dropout_rate=0.0), schema)
        before = model.buffers["bn.0.running_mean"].copy()
        model.train()(*_batch(rng))
        assert not np.array_equal(before, model.buffers["bn.0.running_mean"])

    def test_batch_norm_needs_two_rows(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=1), schema).train()
        x_num, x_cat = _batch(rng, 1)
        with pytest.raises(ValueError):
            model(x_num, x_cat)

    def test_layout_mismatch(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=1), schema)
        with pytest.raises(ValueError):
            model(rng.standard_normal((4, 3)), np.zeros((4, 2), int))
        with pytest.raises(ValueError):
            model(rng.standard_normal((4, 2)), np.full((4, 2), 9))

    def test_unknown_level_row_is_used(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=0), schema).eval()
        x_num = np.zeros((2, 2))
        out = model(x_num, np.array([[5, 0], [0, 0]]))
        w = model.params["output.weight"].ravel()
        npt.assert_allclose(out[0], model.params["embed.0"][5] @ w[2:4] + model.params["embed.1"][0] @ w[4:])


class TestBackward:
    @pytest.mark.parametrize("layers, bn", [(0, True), (1, True), (2, True), (2, False)])
    def test_finite_differences(self, layers, bn):
        assert network_gradient_error(seed=layers, num_layers=layers, use_batch_norm=bn) < 1e-5

    def test_eval_mode_gradients(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=2, nodes_per_layer=4, dropout_rate=0.0), schema)
        model.train()(*_batch(rng))
        model.eval()
        x_num, x_cat = _batch(rng, 6)
        w = rng.standard_normal(6)
        model(x_num, x_cat)
        analytic = model.backward(w)
        key = "dense.0.weight"
        p = model.params[key]
        i = (1, 2)
        h = 1e-6
        orig = p[i]
        p[i] = orig + h
        fp = w @ model(x_num, x_cat)
        p[i] = orig - h
        fm = w @ model(x_num, x_cat)
        p[i] = orig
        npt.assert_allclose(analytic[key][i], (fp - fm) / (2 * h), rtol=1e-6, atol=1e-9)

    def test_dropout_mask_reused(self, schema, rng):
        model = NetworkModel(NetworkConfig(num_layers=1, nodes_per_layer=16, dropout_rate=0.5,
                                           use_batch_norm=False), schema).train()
        x_num, x_cat = _batch(rng)
        model(x_num, x_cat)
        grads = model.backward(np.ones(12))
        assert np.all(np.isfinite(grads["dense.0.weight"]))

    def test_backward_before_forward(self, schema):
        with pytest.raises(RuntimeError):
            NetworkModel(NetworkConfig(), schema).backward(np.ones(2))


def test_state_dict_round_trip(schema, rng):
    a = NetworkModel(NetworkConfig(seed=1), schema)
    b = NetworkModel(NetworkConfig(seed=2), schema)
    b.load_state_dict(a.state_dict())
    x_num, x_cat = _batch(rng)
    npt.assert_array_equal(a.eval()(x_num, x_cat), b.eval()(x_num, x_cat))
    with pytest.raises(ValueError):
        b.load_state_dict({"params": {}, "buffers": {}})
