import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from PIL import Image

from seqgamma import controller as ctl
from seqgamma.cli import main, report_schema


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--len", "12", "--seed", "3", "--size", "32", "--out", str(out)]) == 0
    return out


def validate(doc):
    jsonschema.validate(doc, report_schema())


class TestSynth:
    def test_default_length_and_truth(self, tmp_path):
        assert run("synth", "--seed", "1", "--out", tmp_path) == 0
        rows = (tmp_path / "truth.csv").read_text().splitlines()
        assert rows[0] == "t,g,s,o" and len(rows) == 51
        assert len(list((tmp_path / "clean").glob("*.png"))) == 50

    def test_rerun_byte_identical(self, tmp_path):
        run("synth", "--len", "10", "--seed", "7", "--contrast", "--out", tmp_path / "a")
        run("synth", "--len", "10", "--seed", "7", "--contrast", "--out", tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_too_short_is_usage_error(self, tmp_path, capsys):
        assert run("synth", "--len", "5", "--out", tmp_path) == 2
        assert "--len" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    assert run("enhance", "--bogus") == 2


class TestTrain:
    def test_one_epoch(self, tmp_path, synth_dir):
        assert run("train", "--data", synth_dir / "degraded", "--out", tmp_path, "--epochs", "1",
                   "--channels", "2", "--input-size", "16") == 0
        lines = (tmp_path / "train.csv").read_text().splitlines()
        assert lines[0] == "epoch,mean_loss,seconds" and len(lines) == 2
        doc = json.loads((tmp_path / "train_report.json").read_text())
        validate(doc)
        assert doc["config"]["lr"] == 5e-5 and doc["config"]["batch"] == 4
        assert doc["windows"] == 3
        ctl.load_params(tmp_path / "weights.json")

    def test_defaults_echoed(self, tmp_path, synth_dir, monkeypatch):
        from seqgamma import cli

        monkeypatch.setattr(cli, "train", lambda p, w, cfg: (p, _empty_report()))
        assert run("train", "--data", synth_dir / "degraded", "--out", tmp_path, "--channels", "2") == 0
        cfg = json.loads((tmp_path / "train_report.json").read_text())["config"]
        assert (cfg["lr"], cfg["epochs"], cfg["batch"]) == (5e-5, 10, 4)

    def test_missing_directory(self, tmp_path, capsys):
        assert run("train", "--data", tmp_path / "nope", "--out", tmp_path / "o") == 1
        assert "nope" in capsys.readouterr().err


def _empty_report():
    from seqgamma.trainer import TrainReport

    return TrainReport([], [], [])


class TestEnhance:
    def test_fixed_identity_is_byte_identical(self, tmp_path, synth_dir):
        src = synth_dir / "degraded"
        assert run("enhance", "--input", src, "--output", tmp_path, "--mode", "fixed:1.0") == 0
        for f in sorted(src.glob("*.png")):
            assert (tmp_path / f.name).read_bytes() == f.read_bytes()
        doc = json.loads((tmp_path / "report.json").read_text())
        validate(doc)
        assert doc["gamma_trace"] == [1.0] * 12

    def test_oracle_improves_consistency(self, tmp_path, synth_dir):
        assert run("oracle", "--input", synth_dir / "degraded", "--output", tmp_path) == 0
        doc = json.loads((tmp_path / "report.json").read_text())
        validate(doc)
        m = doc["metrics"]
        assert m["after"]["adjacent_inconsistency"] < m["before"]["adjacent_inconsistency"]
        rows = (tmp_path / "gammas.csv").read_text().splitlines()
        assert rows[0] == "t,gamma,loss" and len(rows) == 13 and rows[1] == "0,1.0,"

    def test_rnn_identity_weights(self, tmp_path, synth_dir):
        w = ctl.save_params(ctl.ControllerParams.initialize(channels=2, input_size=16), tmp_path / "w.json")
        assert run("enhance", "--input", synth_dir / "degraded", "--output", tmp_path / "o",
                   "--weights", w, "--float") == 0
        doc = json.loads((tmp_path / "o" / "report.json").read_text())
        assert doc["gamma_trace"] == [1.0] * 12
        assert doc["timing"]["mean_ms"] > 0
        arr = np.load(tmp_path / "o" / "frame_000000.npy")
        assert arr.dtype == np.float32

    def test_rnn_requires_weights(self, tmp_path, synth_dir):
        assert run("enhance", "--input", synth_dir / "degraded", "--output", tmp_path) == 2

    @pytest.mark.parametrize("mode", ["sharpen", "fixed:abc", "fixed:50"])
    def test_invalid_mode(self, tmp_path, synth_dir, mode):
        assert run("enhance", "--input", synth_dir / "degraded", "--output", tmp_path, "--mode", mode) == 2

    def test_bad_weights_names_tensor(self, tmp_path, synth_dir, capsys):
        doc = ctl.params_to_document(ctl.ControllerParams.initialize())
        del doc["tensors"]["lstm.bias"]
        (tmp_path / "w.json").write_text(json.dumps(doc))
        assert run("enhance", "--input", synth_dir / "degraded", "--output", tmp_path / "o",
                   "--weights", tmp_path / "w.json") == 1
        assert "lstm.bias" in capsys.readouterr().err

    def test_no_timing(self, tmp_path, synth_dir):
        run("enhance", "--input", synth_dir / "degraded", "--output", tmp_path,
            "--mode", "fixed:2", "--no-timing")
        assert "timing" not in json.loads((tmp_path / "report.json").read_text())


class TestEval:
    def test_self_comparison(self, tmp_path, synth_dir):
        d = synth_dir / "degraded"
        assert run("eval", d, d, "--out", tmp_path / "e.json") == 0
        doc = json.loads((tmp_path / "e.json").read_text())
        validate(doc)
        assert doc["metrics"]["a"] == doc["metrics"]["b"]

    def test_clean_beats_degraded(self, tmp_path, synth_dir):
        run("eval", synth_dir / "clean", synth_dir / "degraded", "--out", tmp_path / "e.json")
        m = json.loads((tmp_path / "e.json").read_text())["metrics"]
        for key in ("adjacent_inconsistency", "photometric_score"):
            assert m["b"][key] > m["a"][key]

    def test_stdout(self, synth_dir, capsys):
        run("eval", synth_dir / "clean", synth_dir / "clean")
        assert json.loads(capsys.readouterr().out)["kind"] == "eval"

    def test_corrupt_png_named(self, tmp_path, synth_dir, capsys):
        bad = tmp_path / "bad"
        bad.mkdir()
        for f in (synth_dir / "clean").glob("*.png"):
            (bad / f.name).write_bytes(f.read_bytes())
        (bad / "frame_000004.png").write_bytes(b"not a png")
        assert run("eval", bad, synth_dir / "clean") == 1
        assert "frame_000004.png" in capsys.readouterr().err

    def test_length_mismatch(self, tmp_path, synth_dir):
        short = tmp_path / "short"
        short.mkdir()
        for f in sorted((synth_dir / "clean").glob("*.png"))[:5]:
            (short / f.name).write_bytes(f.read_bytes())
        assert run("eval", short, synth_dir / "clean") == 1

    def test_gap_in_sequence(self, tmp_path, synth_dir, capsys):
        gap = tmp_path / "gap"
        gap.mkdir()
        for f in (synth_dir / "clean").glob("*.png"):
            if f.name != "frame_000003.png":
                (gap / f.name).write_bytes(f.read_bytes())
        assert run("eval", gap, gap) == 1
        assert "3" in capsys.readouterr().err

    def test_correspondence_directory(self, tmp_path, synth_dir):
        corr = tmp_path / "corr"
        corr.mkdir()
        for k in range(11):
            (corr / f"pair_{k:06d}.txt").write_text("0 0 0 0\n5 5 5 5\n10 3 10 3\n20 20 20 20\n")
        assert run("eval", synth_dir / "clean", synth_dir / "degraded", "--corr", corr,
                   "--out", tmp_path / "e.json") == 0
        (corr / "pair_000010.txt").unlink()
        assert run("eval", synth_dir / "clean", synth_dir / "degraded", "--corr", corr) == 1


def test_rgb_png_input(tmp_path, rng):
    src = tmp_path / "rgb"
    src.mkdir()
    for k in range(4):
        Image.fromarray(rng.integers(10, 170, (24, 24, 3), dtype=np.uint8)).save(src / f"frame_{k:06d}.png")
    assert run("oracle", "--input", src, "--output", tmp_path / "o") == 0
    assert np.asarray(Image.open(tmp_path / "o" / "frame_000002.png")).shape == (24, 24, 3)


def test_schema_rejects_missing_fields():
    with pytest.raises(jsonschema.ValidationError):
        validate({"tool": "seqgamma", "kind": "enhance"})
