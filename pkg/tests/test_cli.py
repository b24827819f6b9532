"""
Tests for the noisy-moe command line
"""

import json

import numpy as np
import pandas as pd
import pytest

from core.data_io import read_covariates_csv, write_csv
from core.serialization import load_model, predict_model
from main import COMMANDS, EXIT_DATA, EXIT_ERROR, EXIT_OK, EXIT_USAGE, main

SIMULATION = [
    "--k", "2", "--p", "1", "--n-labeled", "200", "--n-test", "300",
    "--n-unlabeled", "100",
]  # fmt: skip


@pytest.fixture
def simulated(tmp_path):
    """Directory with a small simulated data set"""
    code = main(
        ["simulate", "--outdir", str(tmp_path), "--seed", "3", "-q"] + SIMULATION
    )
    assert code == EXIT_OK
    return tmp_path


class TestSimulateFitPredict:
    """Test cases for the end-to-end workflow"""

    def test_simulate_writes_files(self, simulated):
        """Test the simulated file set"""
        labeled = pd.read_csv(simulated / "labeled.csv")
        assert list(labeled.columns) == ["x1", "y"]
        assert len(labeled) == 200
        assert list(pd.read_csv(simulated / "unlabeled.csv").columns) == ["x1"]
        assert len(pd.read_csv(simulated / "test.csv")) == 300
        _, metadata = load_model(simulated / "truth.json")
        assert metadata["kind"] == "truth"

    def test_fit_then_predict(self, simulated, capsys):
        """Test that predict writes the model's predictions"""
        model_path = simulated / "model.json"
        code = main(
            [
                "fit",
                str(simulated / "labeled.csv"),
                str(simulated / "unlabeled.csv"),
                "--k",
                "2",
                "--out",
                str(model_path),
                "--seed",
                "1",
                "-q",
            ]
        )
        assert code == EXIT_OK
        report = json.loads(model_path.with_suffix(".report.json").read_text())
        assert report["k"] == 2
        assert report["n_unlabeled"] == 100
        assert len(report["transition"]) == 2

        pred_path = simulated / "pred.csv"
        code = main(
            [
                "predict",
                str(model_path),
                str(simulated / "test.csv"),
                "--out",
                str(pred_path),
                "-q",
            ]
        )
        assert code == EXIT_OK
        model, _ = load_model(model_path)
        x = read_covariates_csv(simulated / "test.csv", ["x1"], strict=False)
        yhat = pd.read_csv(pred_path)["yhat"].to_numpy()
        np.testing.assert_allclose(yhat, predict_model(model, x), rtol=1e-12)

    def test_fit_is_thread_invariant(self, simulated):
        """Test that the model file does not depend on the thread count"""
        outputs = []
        for threads in ("1", "3"):
            out = simulated / f"model_{threads}.json"
            args = ["fit", str(simulated / "labeled.csv"), "--k", "2"]
            args += ["--out", str(out), "--seed", "2", "--threads", threads, "-q"]
            assert main(args) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_emit_latents(self, tmp_path):
        """Test latent label files without corruption"""
        args = ["simulate", "--outdir", str(tmp_path), "--seed", "4", "--p0", "1"]
        assert main(args + SIMULATION + ["--emit-latents", "-q"]) == EXIT_OK
        latents = pd.read_csv(tmp_path / "labeled_latents.csv")
        assert list(latents.columns) == ["z", "tilde_z"]
        assert len(latents) == 200
        assert (latents["z"] == latents["tilde_z"]).all()
        assert len(pd.read_csv(tmp_path / "test_latents.csv")) == 300

    def test_fit_auto_k(self, simulated):
        """Test that k=auto records the BIC table in the report"""
        model_path = simulated / "auto.json"
        args = ["fit", str(simulated / "labeled.csv"), str(simulated / "unlabeled.csv")]
        args += ["--k", "auto", "--k-candidates", "1", "2", "3"]
        assert main(args + ["--out", str(model_path), "--seed", "1", "-q"]) == EXIT_OK
        report = json.loads(model_path.with_suffix(".report.json").read_text())
        assert [row["k"] for row in report["bic"]["rows"]] == [1, 2, 3]
        assert report["k"] == report["bic"]["suggested_k"]

    def test_predict_to_stdout(self, simulated, capsys):
        """Test predictions printed as CSV"""
        code = main(
            ["predict", str(simulated / "truth.json"), str(simulated / "test.csv")]
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "yhat"
        assert len(lines) == 301


class TestExitCodes:
    """Test cases for error reporting"""

    def test_missing_file(self, tmp_path):
        """Test that a missing input file is a data error"""
        code = main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m")])
        assert code == EXIT_DATA

    def test_bad_cell(self, tmp_path):
        """Test that an unparseable cell is a data error"""
        path = tmp_path / "data.csv"
        path.write_text("x1,y\n1,2\n3,abc\n")
        code = main(["fit", str(path), "--k", "1", "--out", str(tmp_path / "m")])
        assert code == EXIT_DATA

    def test_invalid_alpha(self, simulated):
        """Test that an out-of-range setting is a usage error"""
        args = ["fit", str(simulated / "labeled.csv"), "--alpha", "0.3"]
        assert main(args + ["--out", str(simulated / "m")]) == EXIT_USAGE

    def test_unknown_config_key(self, simulated):
        """Test that a config file with unknown keys is a usage error"""
        config = simulated / "run.json"
        config.write_text(json.dumps({"alpah": 0.6}))
        args = ["fit", str(simulated / "labeled.csv"), "--config", str(config)]
        assert main(args + ["--out", str(simulated / "m")]) == EXIT_USAGE

    def test_unexpected_exception(self, tmp_path, monkeypatch, capsys):
        """Test that a non-library exception becomes a library error"""

        def broken(args, cfg):
            raise RuntimeError("disk on fire")

        monkeypatch.setitem(COMMANDS, "fit", broken)
        args = ["fit", str(tmp_path / "a.csv"), "--out", str(tmp_path / "m")]
        assert main(args) == EXIT_ERROR
        assert "RuntimeError: disk on fire" in capsys.readouterr().err

    def test_bad_arguments(self):
        """Test that argparse errors exit with status 2"""
        with pytest.raises(SystemExit) as excinfo:
            main(["fit"])
        assert excinfo.value.code == 2
        with pytest.raises(SystemExit):
            main(["fit", "a.csv", "--out", "m", "--method", "forest"])


class TestOtherCommands:
    """Test cases for select-k, bench and evaluate"""

    def test_select_k(self, tmp_path, two_cluster_x, capsys):
        """Test the suggested number of clusters"""
        path = tmp_path / "x.csv"
        write_csv(pd.DataFrame(two_cluster_x, columns=["a", "b"]), path)
        code = main(
            ["select-k", str(path), "--k-candidates", "1", "2", "3", "4", "--seed", "0"]
        )
        assert code == EXIT_OK
        assert "Suggested k: 2" in capsys.readouterr().out

    def test_bench_is_reproducible(self, tmp_path, capsys):
        """Test byte-identical results across runs and thread counts"""
        outputs = []
        for threads in ("1", "3", "1"):
            out = tmp_path / f"bench_{len(outputs)}.csv"
            args = ["bench", "--k", "2", "--p", "1", "--n-labeled", "100"]
            args += ["--n-test", "200", "--n-unlabeled", "0", "--corruption", "0", "20"]
            args += ["--methods", "noisyss", "moess", "--reps", "2", "--seed", "5"]
            args += ["--threads", threads, "--out", str(out), "-q"]
            assert main(args) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]
        assert "MSE" in capsys.readouterr().out

    def test_evaluate(self, simulated, capsys):
        """Test the holdout table"""
        code = main(
            [
                "evaluate",
                str(simulated / "labeled.csv"),
                "--n-train",
                "100",
                "--reps",
                "2",
                "--methods",
                "moess",
                "--k",
                "2",
                "-q",
            ]
        )
        assert code == EXIT_OK
        assert "PE" in capsys.readouterr().out
