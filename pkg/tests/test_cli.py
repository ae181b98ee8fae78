import json
from pathlib import Path

import numpy as np
import pytest

from hetnetsel.cli import EXIT_CONFIG, EXIT_OK, main


def read_bytes(path: Path) -> bytes:
    return Path(path).read_bytes()


def csv_header(path: Path):
    return Path(path).read_text().splitlines()[0].split(",")


class TestSimulate:
    def test_smoke_writes_outputs(self, tmp_path):
        code = main([
            "simulate", "--scenario", "homogeneous-paper",
            "--beta", "1.0", "--horizon", "2.0", "--out-dir", str(tmp_path),
        ])
        assert code == EXIT_OK
        for name in ("trajectory.csv", "adaptation.csv", "cumulative.csv", "manifest.json"):
            assert (tmp_path / name).exists()
        header = csv_header(tmp_path / "trajectory.csv")
        assert header[0] == "t"
        assert header[1:4] == ["x:group:uhf-1", "x:group:mm-1", "x:group:uav-1"]
        assert header[4] == "avgu:group"

    def test_zero_horizon_rejected(self, tmp_path):
        code = main([
            "simulate", "--scenario", "homogeneous-paper",
            "--beta", "0.99", "--horizon", "0", "--out-dir", str(tmp_path),
        ])
        assert code == EXIT_CONFIG

    def test_rerun_byte_identical(self, tmp_path):
        argv = [
            "simulate", "--scenario", "homogeneous-paper", "--beta", "0.7",
            "--horizon", "1.0", "--seed", "7", "--fading",
        ]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out-dir", str(a)]) == EXIT_OK
        assert main(argv + ["--out-dir", str(b)]) == EXIT_OK
        for name in ("trajectory.csv", "adaptation.csv", "cumulative.csv", "manifest.json"):
            assert read_bytes(a / name) == read_bytes(b / name)

    def test_manifest_contents(self, tmp_path):
        main([
            "simulate", "--scenario", "homogeneous-paper",
            "--beta", "1.0", "--horizon", "1.0", "--out-dir", str(tmp_path),
        ])
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["scenario"]["name"] == "homogeneous-paper"
        assert len(manifest["scenario"]["sha256"]) == 64
        assert manifest["parameters"]["beta"] == 1.0
        assert set(manifest["outputs"]) == {
            "adaptation.csv", "cumulative.csv", "trajectory.csv",
        }

    def test_out_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HETNETSEL_OUT_DIR", str(tmp_path / "envout"))
        code = main([
            "simulate", "--scenario", "homogeneous-paper",
            "--beta", "1.0", "--horizon", "0.5",
        ])
        assert code == EXIT_OK
        assert (tmp_path / "envout" / "trajectory.csv").exists()


class TestDirectionField:
    def test_grid_rows_and_equilibrium_flag(self, tmp_path):
        out = tmp_path / "field.csv"
        code = main([
            "direction-field", "--scenario", "homogeneous-paper",
            "--beta", "1.0", "--resolution", "15",
            "--equilibrium-horizon", "60.0", "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "y_u,y_m,dy_u,dy_m,equilibrium"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 121  # 120 interior + flagged equilibrium
        eq_rows = [r for r in rows if float(r[4]) == 1.0]
        assert len(eq_rows) == 1
        assert max(abs(float(eq_rows[0][2])), abs(float(eq_rows[0][3]))) < 1e-6

    def test_malformed_scenario_exit_2(self, tmp_path):
        code = main([
            "direction-field", "--scenario", str(tmp_path / "missing.yaml"),
            "--out", str(tmp_path / "field.csv"),
        ])
        assert code == EXIT_CONFIG


class TestMonteCarlo:
    def test_schema_thirteen_columns(self, tmp_path):
        code = main([
            "montecarlo", "--scenario", "homogeneous-paper",
            "--betas", "0.7,1,1.3", "--replicates", "2",
            "--delta-fade", "0.05", "--seed", "3",
            "--step", "0.01", "--horizon", "0.5",
            "--out-dir", str(tmp_path),
        ])
        assert code == EXIT_OK
        header = csv_header(tmp_path / "montecarlo.csv")
        assert len(header) == 13
        assert header[0] == "t"
        assert header[1].startswith("mean:")
        assert header[4].startswith("loss:")

    def test_identical_reruns(self, tmp_path):
        argv = [
            "montecarlo", "--scenario", "homogeneous-paper",
            "--betas", "1.0", "--replicates", "2",
            "--delta-fade", "0.05", "--seed", "3",
            "--step", "0.01", "--horizon", "0.5",
        ]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out-dir", str(a)]) == EXIT_OK
        assert main(argv + ["--out-dir", str(b)]) == EXIT_OK
        assert read_bytes(a / "montecarlo.csv") == read_bytes(b / "montecarlo.csv")

    def test_replicate_columns_consistent(self, tmp_path):
        main([
            "montecarlo", "--scenario", "homogeneous-paper",
            "--betas", "1.0", "--replicates", "1",
            "--delta-fade", "0.05", "--seed", "3",
            "--step", "0.01", "--horizon", "0.5",
            "--out-dir", str(tmp_path),
        ])
        data = np.genfromtxt(tmp_path / "montecarlo.csv", delimiter=",", names=True)
        loss = data["loss10"] if "loss10" in (data.dtype.names or ()) else None
        names = data.dtype.names
        mean = data[names[1]]
        baseline = data[names[3]]
        loss = data[names[4]]
        assert np.allclose(loss, baseline - mean, atol=1e-12)


class TestScenarioValidate:
    def test_preset_ok(self, capsys):
        assert main(["scenario-validate", "--scenario", "heterogeneous-paper"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("OK:")
        assert "16 strategy owner" in out

    def test_invalid_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("kind: homogeneous\n")
        assert main(["scenario-validate", "--scenario", str(bad)]) == EXIT_CONFIG
        assert "error" in capsys.readouterr().err
