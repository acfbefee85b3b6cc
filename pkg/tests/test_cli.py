import hashlib
import json
import os

import pytest

from fdiakit.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run gen-data -> train -> calibrate once; later tests reuse the files."""
    out = tmp_path_factory.mktemp("pipeline")
    ds = str(out / "dataset.csv")
    model = str(out / "model.json")
    # validation needs >= 100 rows for the comparison's BDD calibration
    assert main(["gen-data", "--synthetic", "--hours", "160", "--countries", "4",
                 "--splits", "50,100,10", "--seed", "3", "--out", str(out)]) == 0
    assert main(["train", "--dataset", ds, "--epochs", "15", "--seed", "3",
                 "--out", str(out)]) == 0
    assert main(["calibrate", "--dataset", ds, "--model", model,
                 "--alpha", "90", "--out", str(out)]) == 0
    return out


class TestPipeline:
    def test_artifacts_exist(self, pipeline):
        for name in ("dataset.csv", "dataset.csv.meta.json", "model.json",
                     "loss_log.csv", "loss_log.png", "error_curve.csv",
                     "error_curve.png"):
            assert (pipeline / name).exists(), name

    def test_model_is_calibrated(self, pipeline):
        doc = json.loads((pipeline / "model.json").read_text())
        assert doc["threshold"] is not None
        assert doc["alpha"] == 90.0

    def test_attack_trace(self, pipeline, capsys):
        code, cap = _run(capsys, "attack",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(pipeline / "model.json"),
                         "--window-hours", "8", "--attack-hour", "2",
                         "--out", str(pipeline))
        assert code == 0
        lines = (pipeline / "trace.csv").read_text().splitlines()
        assert lines[0] == "hour,clean_score,attacked_score,threshold,flag"
        assert len(lines) == 9
        assert (pipeline / "trace.png").exists()

    def test_detect_scores(self, pipeline, capsys):
        code, cap = _run(capsys, "detect",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(pipeline / "model.json"),
                         "--out", str(pipeline))
        assert code == 0
        lines = (pipeline / "scores.csv").read_text().splitlines()
        assert len(lines) == 11    # header + 10 test hours
        assert "flagged" in cap.out

    def test_evaluate(self, pipeline, capsys):
        code, cap = _run(capsys, "evaluate",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(pipeline / "model.json"),
                         "--magnitudes", "0.0,0.3",
                         "--out", str(pipeline))
        assert code == 0
        doc = json.loads((pipeline / "report.json").read_text())
        assert doc["curves"][0]["x"] == [0.0, 0.3]
        assert (pipeline / "sweep.png").exists()

    def test_compare(self, pipeline, capsys):
        code, cap = _run(capsys, "compare",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(pipeline / "model.json"),
                         "--gammas", "0.0,0.1", "--seeds-per-point", "2",
                         "--out", str(pipeline))
        assert code == 0
        doc = json.loads((pipeline / "compare.json").read_text())
        names = {c["detector"] for c in doc["curves"]}
        assert names == {"autoencoder", "bdd"}
        assert "seed_ledger" in doc["config"]


class TestDeterminism:
    def test_rerun_byte_identical(self, tmp_path):
        digests = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["gen-data", "--synthetic", "--hours", "30",
                         "--countries", "3", "--splits", "20,5,5",
                         "--seed", "9", "--out", str(out)]) == 0
            assert main(["train", "--dataset", str(out / "dataset.csv"),
                         "--epochs", "5", "--seed", "9", "--out", str(out)]) == 0
            assert main(["calibrate", "--dataset", str(out / "dataset.csv"),
                         "--model", str(out / "model.json"), "--alpha", "90",
                         "--out", str(out)]) == 0
            h = {}
            for name in ("dataset.csv", "model.json", "loss_log.csv",
                         "loss_log.png", "error_curve.png"):
                h[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()
            digests.append(h)
        assert digests[0] == digests[1]


class TestConfigFile:
    def test_config_fills_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hours": 30, "countries": 3,
                                   "splits": "20,5,5", "seed": 5}))
        code, cap = _run(capsys, "gen-data", "--synthetic",
                         "--config", str(cfg), "--out", str(tmp_path))
        assert code == 0
        assert "30 hours" in cap.out

    def test_cli_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"hours": 48}))
        code, cap = _run(capsys, "gen-data", "--synthetic", "--hours", "24",
                         "--countries", "3", "--splits", "14,5,5",
                         "--config", str(cfg), "--out", str(tmp_path))
        assert code == 0
        assert "24 hours" in cap.out

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_a_flag": 1}))
        code, cap = _run(capsys, "gen-data", "--config", str(cfg),
                         "--out", str(tmp_path))
        assert code == 2
        assert "not_a_flag" in cap.err

    def test_invalid_json(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{oops")
        code, cap = _run(capsys, "gen-data", "--config", str(cfg),
                         "--out", str(tmp_path))
        assert code == 2


class TestErrors:
    def test_missing_case_file(self, tmp_path, capsys):
        code, cap = _run(capsys, "gen-data", "--synthetic", "--hours", "10",
                         "--case", str(tmp_path / "nope.txt"),
                         "--out", str(tmp_path))
        assert code == 2
        assert "nope.txt" in cap.err

    def test_missing_dataset(self, tmp_path, capsys):
        code, cap = _run(capsys, "train", "--dataset",
                         str(tmp_path / "nope.csv"), "--out", str(tmp_path))
        assert code == 2

    def test_malformed_attack_spec(self, pipeline, capsys):
        code, cap = _run(capsys, "attack",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(pipeline / "model.json"),
                         "--attack", "loads 108=0.1",
                         "--out", str(pipeline))
        assert code == 1

    def test_uncalibrated_model(self, pipeline, tmp_path, capsys):
        doc = json.loads((pipeline / "model.json").read_text())
        doc["threshold"] = None
        raw = tmp_path / "raw.json"
        raw.write_text(json.dumps(doc))
        code, cap = _run(capsys, "detect",
                         "--dataset", str(pipeline / "dataset.csv"),
                         "--model", str(raw), "--out", str(tmp_path))
        assert code == 2
        assert "calibrate" in cap.err

    def test_no_subcommand_usage_error(self, capsys):
        assert main([]) == 2

    def test_help(self, capsys):
        code, cap = _run(capsys, "--help")
        assert code == 0
        for name in ("gen-data", "train", "calibrate", "attack", "detect",
                     "evaluate", "compare"):
            assert name in cap.out
