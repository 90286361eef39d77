import csv
import json
import os

import pytest

from hfnet.cli import main


def dir_digest(path):
    out = {}
    for name in sorted(os.listdir(path)):
        full = os.path.join(path, name)
        if os.path.isfile(full):
            with open(full, "rb") as fh:
                out[name] = fh.read()
    return out


class TestUsageErrors:
    def test_no_verb(self, capsys):
        assert main([]) == 1

    def test_unknown_verb(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert main(["train", "--out", "x"]) == 1
        err = capsys.readouterr().err
        assert "--manifest" in err

    def test_unknown_flag(self, capsys):
        assert main(["phantom", "--subjects", "2", "--out", "x", "--bogus"]) == 1

    def test_bad_choice(self, capsys):
        assert main(["preprocess", "--manifest", "m", "--out", "o",
                     "--mri-mode", "sideways"]) == 1


class TestDataErrors:
    def test_missing_manifest_is_data_error(self, tmp_path, capsys):
        assert main(["preprocess", "--manifest", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_malformed_manifest_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["preprocess", "--manifest", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_bad_checkpoint_is_data_error(self, tmp_path, capsys):
        ckpt = tmp_path / "x.hfn"
        ckpt.write_bytes(b"JUNKJUNKJUNKJUNK")
        manifest = tmp_path / "m.json"
        manifest.write_text("{}")
        assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(manifest)]) == 2


class TestPhantomDeterminism:
    def test_same_seed_byte_identical_dirs(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["phantom", "--subjects", "4", "--dims", "16x16x8", "--seed", "7"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert dir_digest(a) == dir_digest(b)

    def test_config_echoed_before_acting(self, tmp_path, capsys):
        assert main(["phantom", "--subjects", "2", "--dims", "16x16x8",
                     "--out", str(tmp_path / "c")]) == 0
        out = capsys.readouterr().out
        assert out.index("configuration") < out.index("wrote")
        assert '"seed": 0' in out


@pytest.mark.slow
class TestPipelineEndToEnd:
    def test_full_verb_sequence(self, tmp_path, capsys):
        raw = tmp_path / "raw"
        manifest = tmp_path / "manifest.json"
        proc = tmp_path / "proc"
        run = tmp_path / "run"
        reports = tmp_path / "reports"
        csvs = tmp_path / "csvs"

        assert main(["phantom", "--subjects", "24", "--dims", "16x16x8",
                     "--delta", "0.4", "--seed", "5", "--out", str(raw)]) == 0
        assert main(["cohort", "--clinical", str(raw / "clinical.csv"),
                     "--images", str(raw), "--out", str(manifest),
                     "--fractions", "0.6,0.2,0.2",
                     "--roi-size", "16x16x8", "--seed", "2"]) == 0
        assert main(["preprocess", "--manifest", str(manifest),
                     "--mri-mode", "raw", "--pet-grid", "origin",
                     "--out", str(proc)]) == 0
        assert main(["train", "--manifest", str(proc / "manifest.json"),
                     "--arch", "single", "--task", "nl-ad", "--epochs", "4",
                     "--width", "0.25", "--batch-size", "8", "--seed", "3",
                     "--out", str(run)]) == 0
        best = json.loads((run / "best.json").read_text())
        ckpt = run / best["checkpoint"]
        assert ckpt.exists()
        assert main(["eval", "--checkpoint", str(ckpt), "--manifest",
                     str(proc / "manifest.json"), "--split", "test",
                     "--out", str(reports)]) == 0
        assert main(["report", "--in", str(reports), "--out", str(csvs)]) == 0

        with open(csvs / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["task"] == "nl_ad" and rows[0]["arch"] == "single"
        assert 0.0 <= float(rows[0]["AUC"]) <= 1.0
        roc_files = [f for f in os.listdir(csvs) if f.startswith("roc_")]
        assert len(roc_files) == 1

    def test_cross_task_eval_verb(self, tmp_path):
        raw = tmp_path / "raw"
        manifest = tmp_path / "manifest.json"
        proc = tmp_path / "proc"
        run = tmp_path / "run"
        assert main(["phantom", "--subjects", "48", "--dims", "16x16x8",
                     "--delta", "0.4", "--seed", "6", "--out", str(raw),
                     "--classes", "0.25,0.25,0.25,0.25"]) == 0
        assert main(["cohort", "--clinical", str(raw / "clinical.csv"),
                     "--images", str(raw), "--out", str(manifest),
                     "--fractions", "0.5,0.25,0.25",
                     "--roi-size", "16x16x8", "--seed", "2"]) == 0
        assert main(["preprocess", "--manifest", str(manifest), "--out", str(proc)]) == 0
        assert main(["train", "--manifest", str(proc / "manifest.json"),
                     "--arch", "single", "--task", "nl-ad", "--epochs", "2",
                     "--width", "0.125", "--batch-size", "8", "--seed", "3",
                     "--out", str(run)]) == 0
        best = json.loads((run / "best.json").read_text())
        code = main(["eval", "--checkpoint", str(run / best["checkpoint"]),
                     "--manifest", str(proc / "manifest.json"),
                     "--split", "test", "--cross-task", "smci-pmci"])
        assert code == 0
