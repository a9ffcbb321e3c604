import json

import numpy as np
import pytest

from suress.cli import EXIT_CONFIG, EXIT_IO, main, window_densities
from suress.core import read_matrix

pytestmark = pytest.mark.filterwarnings("ignore:importance weights:RuntimeWarning")


@pytest.fixture
def quickstart_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "quickstart", "--out", str(out), "--seed", "1"]) == 0
    return out


def short_config(sim_dir, n_iter=200, burnin=100, **replace):
    text = (sim_dir / "config.txt").read_text()
    replace = {"nIter = 10000": f"nIter = {n_iter}", "burnin = 5000": f"burnin = {burnin}",
               **replace}
    for old, new in replace.items():
        text = text.replace(old, new)
    path = sim_dir / "short.txt"
    path.write_text(text)
    return path


def csv_outputs(run_dir):
    return {p.name: p.read_bytes() for p in sorted(run_dir.glob("*.csv"))}


class TestSimulate:
    def test_quickstart_files(self, quickstart_dir):
        for name in ("data.csv", "B_true.csv", "gamma_true.csv", "config.txt",
                     "simulation.json"):
            assert (quickstart_dir / name).is_file()
        info = json.loads((quickstart_dir / "simulation.json").read_text())
        assert (info["n"], info["p"], info["s"]) == (10, 15, 3)

    def test_eqtl_desk(self, tmp_path):
        assert main(["simulate", "eqtl", "--scale", "desk", "--out", str(tmp_path)]) == 0
        _, G = read_matrix(tmp_path / "G_true.csv")
        assert G.shape == (5, 5)
        info = json.loads((tmp_path / "simulation.json").read_text())
        np.testing.assert_allclose(info["snr"], 25.0)


class TestFitAndFollowUps:
    def test_pipeline(self, quickstart_dir, tmp_path, capsys):
        run_dir = tmp_path / "run"
        assert main(["fit", str(short_config(quickstart_dir)), "--out", str(run_dir)]) == 0
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert manifest["model"] == "SSUR-H"
        for name in manifest["outputs"]:
            assert (run_dir / name).is_file()
        _, gamma = read_matrix(run_dir / "gamma_hat.csv")
        assert gamma.shape == (15, 3)

        assert main(["summarize", str(run_dir)]) == 0
        text = capsys.readouterr().out
        assert "Number of selected predictors" in text and "elpd.LOO" in text
        assert (run_dir / "selected.csv").is_file()

        assert main(["evaluate", "--truth", str(quickstart_dir), "--run", str(run_dir)]) == 0
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["auc"] <= 1.0

        assert main(["diag", str(run_dir)]) == 0
        assert (run_dir / "graph.dot").read_text().startswith("graph responses {")
        _, trace = read_matrix(run_dir / "trace_logP.csv")
        assert trace.shape == (200, 2)

    def test_byte_identical_reruns(self, quickstart_dir, tmp_path):
        cfg = short_config(quickstart_dir, n_iter=120, burnin=40, **{"nChains = 2": "nChains = 3"})
        ref = None
        for threads in (1, 2, 4):
            run_dir = tmp_path / f"run{threads}"
            assert main(["fit", str(cfg), "--out", str(run_dir), "--threads", str(threads)]) == 0
            files = csv_outputs(run_dir)
            if ref is None:
                ref = files
            assert files == ref

    def test_seed_override(self, quickstart_dir, tmp_path):
        cfg = short_config(quickstart_dir, n_iter=60, burnin=20)
        main(["fit", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3"])
        main(["fit", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
        assert (tmp_path / "a" / "logP.csv").read_bytes() != (tmp_path / "b" / "logP.csv").read_bytes()


class TestExitCodes:
    def test_config_error(self, quickstart_dir, tmp_path, capsys):
        cfg = short_config(quickstart_dir, **{"covariancePrior = HIW": "covariancePrior = XYZ"})
        assert main(["fit", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.txt").write_text("nIters = 3\n")
        assert main(["fit", str(tmp_path / "c.txt"), "--out", str(tmp_path / "r")]) == EXIT_CONFIG

    def test_missing_data_file(self, tmp_path):
        (tmp_path / "c.txt").write_text("data = nowhere.csv\nY = 0:1\nX = 1:3\n")
        assert main(["fit", str(tmp_path / "c.txt"), "--out", str(tmp_path / "r")]) == EXIT_IO

    def test_missing_run(self, tmp_path, capsys):
        assert main(["summarize", str(tmp_path)]) == EXIT_IO
        assert "missing run artifact" in capsys.readouterr().err

    def test_deleted_artifact(self, quickstart_dir, tmp_path, capsys):
        run_dir = tmp_path / "run"
        main(["fit", str(short_config(quickstart_dir, 60, 20)), "--out", str(run_dir)])
        (run_dir / "G_hat.csv").unlink()
        assert main(["diag", str(run_dir)]) == EXIT_IO
        assert "G_hat.csv" in capsys.readouterr().err

    def test_argparse_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["fit"])
        assert info.value.code == 2


class TestWindowDensities:
    def test_identical_halves(self):
        trace = np.tile(np.arange(10.0), 40)
        dens, ks = window_densities(trace, bins=10)
        assert dens.shape == (10, 3)
        assert ks < 0.05

    def test_drift_detected(self):
        trace = np.linspace(0, 1, 400)
        _, ks = window_densities(trace)
        assert ks > 0.4
