import json

import numpy as np
import pytest

from gehan_aft.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, main, read_config_file
from gehan_aft.dataset import load_csv


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n", "600", "--censor", "0.3", "--seed", "7",
                 "--out", str(root / "sim")]) == 0
    assert main(["simulate", "--n", "200", "--censor", "0.3", "--seed", "8",
                 "--out", str(root / "test")]) == 0
    return root


@pytest.fixture(scope="module")
def trained(sim):
    out = sim / "train"
    code = main(["train", "--data", str(sim / "sim" / "data.csv"), "--layers", "0", "--lr", "0.1",
                 "--max-epochs", "15", "--out", str(out)])
    assert code == 0
    return out


class TestSimulate:
    def test_outputs(self, sim):
        ds = load_csv(sim / "sim" / "data.csv")
        assert len(ds) == 600
        assert ds.censoring_fraction == pytest.approx(0.3)
        truth = json.loads((sim / "sim" / "truth.json").read_text())
        assert truth["beta"] == [1.0, -1.0, 0.5]
        assert "n = 600" in (sim / "sim" / "config.txt").read_text()

    def test_beta_and_error_dist(self, tmp_path):
        assert main(["simulate", "--n", "50", "--beta", "0.5,2", "--error-dist", "logistic",
                     "--out", str(tmp_path)]) == 0
        assert load_csv(tmp_path / "data.csv").schema.names == ("x1", "x2")


class TestTrain:
    def test_outputs(self, trained):
        for name in ("checkpoint.json", "report.json", "timing.json", "train.scaler.json", "config.txt"):
            assert (trained / name).is_file()
        report = json.loads((trained / "report.json").read_text())
        assert "epoch_seconds" not in report
        assert len(report["coefficients_original_scale"]) == 3
        assert report["best_valid_loss"] <= report["initial_valid_loss"]

    def test_deterministic(self, sim, trained, tmp_path):
        main(["train", "--data", str(sim / "sim" / "data.csv"), "--layers", "0", "--lr", "0.1",
              "--max-epochs", "15", "--out", str(tmp_path)])
        for name in ("checkpoint.json", "report.json"):
            assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()

    def test_config_file_and_flag_precedence(self, sim, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nlayers = 1\nnodes = 4\nmax_epochs = 3\nlr = 0.5\n")
        out = tmp_path / "o"
        assert main(["train", "--config", str(cfg), "--data", str(sim / "sim" / "data.csv"),
                     "--lr", "0.02", "--out", str(out)]) == 0
        resolved = (out / "config.txt").read_text()
        assert "lr = 0.02" in resolved
        assert "nodes = 4" in resolved
        ck = json.loads((out / "checkpoint.json").read_text())
        assert ck["network_config"]["num_layers"] == 1
        assert ck["train_config"]["optim"]["base_learning_rate"] == 0.02

    def test_valid_data_file(self, sim, tmp_path):
        assert main(["train", "--data", str(sim / "sim" / "data.csv"),
                     "--valid-data", str(sim / "test" / "data.csv"), "--layers", "1",
                     "--nodes", "4", "--max-epochs", "1", "--out", str(tmp_path)]) == 0

    def test_lr_sweep(self, sim, tmp_path):
        assert main(["train", "--data", str(sim / "sim" / "data.csv"), "--layers", "0",
                     "--max-epochs", "1", "--lr-sweep", "--out", str(tmp_path)]) == 0
        lines = dict(l.split(" = ") for l in (tmp_path / "config.txt").read_text().splitlines())
        assert float(lines["lr"]) in (1e-2, 3e-3, 1e-3, 3e-4)


class TestEval:
    def test_metrics(self, sim, trained, tmp_path):
        assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(sim / "test" / "data.csv"), "--out", str(tmp_path)]) == 0
        m = json.loads((tmp_path / "metrics.json").read_text())
        assert m["c_index"] > 0.7
        assert m["c_td"] == pytest.approx(m["c_index"], abs=0.02)
        assert 0 < m["ibs"] < 0.25
        assert len((tmp_path / "bs_curve.csv").read_text().splitlines()) == 102

    @pytest.mark.parametrize("source", ["test", "train"])
    def test_null_model(self, sim, trained, tmp_path, source):
        assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(sim / "test" / "data.csv"), "--null-model",
                     "--censoring", source, "--out", str(tmp_path)]) == 0
        m = json.loads((tmp_path / "metrics.json").read_text())
        tol = 1e-3 if source == "test" else 0.05
        assert m["ibs"] == pytest.approx(0.25, abs=tol)

    def test_scores_and_curves_files(self, sim, trained, tmp_path):
        pred = tmp_path / "pred"
        assert main(["predict", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(sim / "test" / "data.csv"), "--out", str(pred)]) == 0
        scores = tmp_path / "scores.csv"
        scores.write_text("score\n" + "\n".join(str(v) for v in np.arange(200.0)) + "\n")
        assert main(["eval", "--data", str(sim / "test" / "data.csv"), "--scores", str(scores),
                     "--curves", str(pred / "curves.csv"),
                     "--censoring-data", str(sim / "sim" / "data.csv"),
                     "--out", str(tmp_path / "ev")]) == 0

    def test_needs_censoring_source(self, sim, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text("\n".join("0" for _ in range(200)) + "\n")
        code = main(["eval", "--data", str(sim / "test" / "data.csv"), "--scores", str(scores),
                     "--null-model", "--censoring", "train", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_score_count_mismatch(self, sim, tmp_path):
        scores = tmp_path / "scores.csv"
        scores.write_text("1\n2\n")
        code = main(["eval", "--data", str(sim / "test" / "data.csv"), "--scores", str(scores),
                     "--null-model", "--out", str(tmp_path)])
        assert code == EXIT_DATA


class TestPredict:
    def test_default_grid(self, sim, trained, tmp_path):
        assert main(["predict", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(sim / "test" / "data.csv"), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "curves.csv").read_text().splitlines()
        assert len(rows) == 201
        assert len(rows[0].split(",")) == 101
        payload = json.loads((tmp_path / "curves.json").read_text())
        assert len(payload["survival"]) == 200

    def test_features_only_needs_grid(self, sim, trained, tmp_path):
        feats = tmp_path / "x.csv"
        feats.write_text("x1,x2,x3\n0.1,0.2,0.3\n-1,0,1\n")
        base = ["predict", "--checkpoint", str(trained / "checkpoint.json"), "--data", str(feats)]
        assert main(base + ["--out", str(tmp_path / "a")]) == EXIT_USAGE
        assert main(base + ["--grid", "0.5:5:10", "--out", str(tmp_path / "b")]) == 0
        assert main(base + ["--grid", "1,2,4", "--out", str(tmp_path / "c")]) == 0
        assert main(base + ["--grid", "3,1", "--out", str(tmp_path / "d")]) == EXIT_USAGE


class TestExitCodes:
    def test_usage(self, capsys):
        assert main(["train", "--bogus"]) == EXIT_USAGE
        assert main(["train"]) == EXIT_USAGE
        assert main([]) == EXIT_USAGE
        assert main(["--help"]) == 0

    def test_bad_config_key(self, tmp_path, sim):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("layerz = 2\n")
        code = main(["train", "--config", str(cfg), "--data", str(sim / "sim" / "data.csv"),
                     "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_bad_hyperparameter(self, sim, tmp_path):
        code = main(["train", "--data", str(sim / "sim" / "data.csv"), "--dropout", "1.5",
                     "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_data_errors(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_DATA
        bad = tmp_path / "bad.csv"
        bad.write_text("time,event,x\n1,1,0\n-2,0,1\n")
        assert main(["train", "--data", str(bad), "--out", str(tmp_path)]) == EXIT_DATA

    def test_divergence(self, sim, tmp_path):
        with np.errstate(all="ignore"):
            code = main(["train", "--data", str(sim / "sim" / "data.csv"), "--lr", "1e300",
                         "--no-batch-norm", "--dropout", "0", "--max-epochs", "5",
                         "--out", str(tmp_path)])
        assert code == EXIT_NUMERIC
        assert (tmp_path / "checkpoint.json").is_file()

    def test_selfcheck(self, capsys):
        assert main(["selfcheck"]) == 0
        assert "PASS gradients" in capsys.readouterr().out


def test_read_config_file_types(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("beta = 1,2\nnonlinear = yes\nn = 10\n")
    opts = read_config_file(cfg, "simulate")
    assert opts == {"beta": [1.0, 2.0], "nonlinear": True, "n": 10}


def test_thread_env(sim, tmp_path, monkeypatch):
    monkeypatch.setenv("GEHAN_AFT_THREADS", "1")
    assert main(["simulate", "--n", "20", "--out", str(tmp_path)]) == 0
    monkeypatch.setenv("GEHAN_AFT_THREADS", "many")
    assert main(["simulate", "--n", "20", "--out", str(tmp_path)]) == EXIT_USAGE
