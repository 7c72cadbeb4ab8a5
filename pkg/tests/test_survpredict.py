import numpy as np
import numpy.testing as npt
import pytest

from gehan_aft.checkpoint import Checkpoint
from gehan_aft.dataset import (
    FeatureSchema,
    SurvivalDataset,
    apply_standardization,
    fit_standardization,
    simulate_aft,
)
from gehan_aft.network import NetworkConfig, NetworkModel
from gehan_aft.nonparam import censoring_km, kaplan_meier
from gehan_aft.survpredict import (
    BaselineHazard,
    SurvivalCurveSet,
    fit_baseline,
    predict_scores,
    predict_survival,
    survival_from_scores,
)


@pytest.fixture
def linear_model(small_linear):
    _, ds = small_linear
    model = NetworkModel(NetworkConfig(num_layers=0), ds.schema).eval()
    model.params["output.weight"][:] = [[0.4], [-0.4], [0.2]]
    model.standardization = ds.params
    return model


class TestCurves:
    def test_formula(self, linear_model, small_linear):
        _, ds = small_linear
        base = fit_baseline(linear_model, ds)
        grid = np.array([0.5, 1.0, 2.0])
        curves = predict_survival(linear_model, base, ds.subset(np.arange(5)), grid)
        g = predict_scores(linear_model, ds.subset(np.arange(5)))
        z = (np.log(grid) - ds.params.mu) / ds.params.sigma
        expected = np.exp(-base.cumhaz(z[None, :] - g[:, None]))
        npt.assert_allclose(curves.survival, expected, rtol=1e-14)

    def test_monotone_and_bounded(self, linear_model, small_linear):
        _, ds = small_linear
        curves = predict_survival(linear_model, fit_baseline(linear_model, ds), ds)
        assert curves.survival.shape == (len(ds), 101)
        assert np.all(np.diff(curves.survival, axis=1) <= 0)
        assert np.all((curves.survival > 0) & (curves.survival <= 1))

    def test_higher_score_survives_longer(self, linear_model, small_linear):
        _, ds = small_linear
        base = fit_baseline(linear_model, ds)
        curves = survival_from_scores([-1.0, 0.0, 1.0], base, [np.exp(ds.params.mu)])
        assert np.all(np.diff(curves.survival[:, 0]) >= 0)

    def test_null_model_tracks_km(self):
        raw = simulate_aft(800, [1.0], censor_rate=0.3, seed=6)
        # A constant feature-free predictor: zero weight.
        ds = apply_standardization(raw, fit_standardization(raw))
        model = NetworkModel(NetworkConfig(num_layers=0), ds.schema).eval()
        model.params["output.weight"][:] = 0.0
        base = fit_baseline(model, ds)
        grid = np.quantile(raw.time, np.linspace(0.05, 0.9, 20))
        curves = survival_from_scores([0.0], base, grid)
        km = kaplan_meier(raw.time, raw.event)
        assert np.max(np.abs(curves.survival[0] - km(grid))) < 0.05

    def test_all_censored(self):
        ds = SurvivalDataset([1.0, 2.0, 3.0], [0, 0, 0], [[0.0], [1.0], [2.0]], np.zeros((3, 0)),
                             FeatureSchema.numeric(["x"]))
        ds = apply_standardization(ds, fit_standardization(ds))
        model = NetworkModel(NetworkConfig(num_layers=0), ds.schema).eval()
        curves = predict_survival(model, fit_baseline(model, ds), ds)
        npt.assert_array_equal(curves.survival, 1.0)

    def test_rejects_other_schema(self, linear_model):
        raw = simulate_aft(30, [1.0, 1.0], seed=0)
        ds = apply_standardization(raw, fit_standardization(raw))
        with pytest.raises(ValueError):
            fit_baseline(linear_model, ds)

    def test_rejects_other_standardization(self, linear_model):
        raw = simulate_aft(30, [1.0, -1.0, 0.5], seed=0)
        ds = apply_standardization(raw, fit_standardization(raw))
        with pytest.raises(ValueError):
            predict_survival(linear_model, None, ds)

    def test_nonpositive_grid(self, linear_model, small_linear):
        _, ds = small_linear
        with pytest.raises(ValueError):
            survival_from_scores([0.0], fit_baseline(linear_model, ds), [0.0, 1.0])


class TestCurveSet:
    def test_step_lookup(self):
        c = SurvivalCurveSet(np.array([1.0, 2.0, 4.0]), np.array([[0.9, 0.5, 0.1]]))
        npt.assert_array_equal(c.at([0.5, 1.0, 3.9, 4.0, 9.0]), [[0.9, 0.9, 0.5, 0.1, 0.1]])

    def test_csv_round_trip(self, tmp_path, rng):
        c = SurvivalCurveSet(np.array([1.0, 2.0]), rng.random((3, 2)))
        c.to_csv(tmp_path / "c.csv")
        back = SurvivalCurveSet.from_csv(tmp_path / "c.csv")
        npt.assert_array_equal(back.survival, c.survival)
        npt.assert_array_equal(back.time_grid, c.time_grid)

    def test_validation(self):
        with pytest.raises(ValueError):
            SurvivalCurveSet(np.array([2.0, 1.0]), np.ones((1, 2)))
        with pytest.raises(ValueError):
            SurvivalCurveSet(np.array([1.0]), np.ones((1, 2)))


def test_checkpoint_round_trip(tmp_path, small_linear):
    _, ds = small_linear
    cfg = NetworkConfig(num_layers=2, nodes_per_layer=4)
    model = NetworkModel(cfg, ds.schema)
    model.train()(ds.x_num[:32])
    model.eval()
    model.standardization = ds.params
    base = fit_baseline(model, ds)
    ck = Checkpoint(model, ds.params, base, censoring_km(ds.time, ds.event), {"seed": 0})
    ck.save(tmp_path / "ck.json")
    back = Checkpoint.load(tmp_path / "ck.json")
    npt.assert_array_equal(predict_scores(back.model, ds), predict_scores(model, ds))
    assert back.baseline.cumhaz == base.cumhaz
    assert back.censoring == ck.censoring
    ck.save(tmp_path / "ck2.json")
    assert (tmp_path / "ck.json").read_bytes() == (tmp_path / "ck2.json").read_bytes()


def test_checkpoint_rejects_tampered_schema(tmp_path, small_linear):
    import json

    _, ds = small_linear
    model = NetworkModel(NetworkConfig(num_layers=0), ds.schema)
    Checkpoint(model, ds.params).save(tmp_path / "ck.json")
    d = json.loads((tmp_path / "ck.json").read_text())
    d["schema"]["names"][0] = "renamed"
    with pytest.raises(ValueError):
        Checkpoint.from_dict(d)


def test_baseline_dict_round_trip(linear_model, small_linear):
    _, ds = small_linear
    base = fit_baseline(linear_model, ds)
    back = BaselineHazard.from_dict(base.to_dict())
    assert back.cumhaz == base.cumhaz
