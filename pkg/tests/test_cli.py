import hashlib
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
from scipy.io import wavfile

from avfusion.cli import main

SYNTH_ARGS = ["--n-train", "6", "--n-val", "3", "--n-test", "2",
              "--L", "4", "--d-a", "3", "--d-v", "3"]


def run(argv):
    return main(argv)


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-synth")
    assert run(["synth", "--output-dir", str(out), "--seed", "7", *SYNTH_ARGS]) == 0
    return out


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("cli-train")
    code = run([
        "train", "--output-dir", str(out), "--seed", "7",
        "--model", "concat", "--max-epochs", "2", "--batch-size", "4",
        "--train-manifest", str(synth_dir / "train" / "manifest.json"),
        "--val-manifest", str(synth_dir / "val" / "manifest.json"),
    ])
    assert code == 0
    return out


class TestSynth:
    def test_manifests_exist_and_validate(self, synth_dir):
        from avfusion.data import load_manifest

        for split in ("train", "val", "test"):
            man = load_manifest(synth_dir / split / "manifest.json")
            assert man.split == split
        assert (synth_dir / "synth_report.json").exists()
        assert (synth_dir / "resolved.cfg").exists()

    def test_same_seed_identical_hashes(self, tmp_path):
        out = tmp_path / "s"
        run(["synth", "--output-dir", str(out), "--seed", "7", *SYNTH_ARGS])
        first = tree_digest(out)
        shutil.rmtree(out)
        run(["synth", "--output-dir", str(out), "--seed", "7", *SYNTH_ARGS])
        assert tree_digest(out) == first

    def test_mask_prob_out_of_bounds_fails(self, tmp_path, capsys):
        code = run(["synth", "--output-dir", str(tmp_path / "x"),
                    "--mask-prob", "0.6", *SYNTH_ARGS])
        assert code == 1
        assert "mask_prob" in capsys.readouterr().err


class TestTrain:
    def test_artifacts_written(self, train_dir):
        assert (train_dir / "history.tsv").exists()
        assert (train_dir / "summary.json").exists()
        assert (train_dir / "resolved.cfg").exists()
        assert (train_dir / "checkpoints" / "best.params").exists()
        assert (train_dir / "checkpoints" / "epoch_0001.params").exists()
        history = (train_dir / "history.tsv").read_text().splitlines()
        assert history[0] == "epoch\ttrain_loss\ttrain_ccc\tval_ccc"
        assert len(history) == 3  # header + 2 epochs

    def test_missing_manifest_fails(self, tmp_path, capsys):
        code = run(["train", "--output-dir", str(tmp_path),
                    "--train-manifest", str(tmp_path / "nope.json"),
                    "--val-manifest", str(tmp_path / "nope.json")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_required_options_enforced(self, tmp_path, capsys):
        code = run(["train", "--output-dir", str(tmp_path)])
        assert code == 1
        assert "train_manifest" in capsys.readouterr().err


class TestEval:
    def test_reproduces_training_summary_bitwise(self, synth_dir, train_dir, tmp_path):
        out = tmp_path / "eval"
        code = run([
            "eval", "--output-dir", str(out),
            "--checkpoint", str(train_dir / "checkpoints" / "best.params"),
            "--eval-manifest", str(synth_dir / "val" / "manifest.json"),
        ])
        assert code == 0
        report = json.loads((out / "eval_report.json").read_text())
        summary = json.loads((train_dir / "summary.json").read_text())
        assert report["rho_c"] == summary["best_val_ccc"]

    def test_dim_mismatch_names_both(self, synth_dir, train_dir, tmp_path, capsys):
        other = tmp_path / "other"
        run(["synth", "--output-dir", str(other), "--seed", "1",
             "--n-train", "2", "--n-val", "2", "--n-test", "2",
             "--L", "4", "--d-a", "5", "--d-v", "3"])
        code = run([
            "eval", "--output-dir", str(tmp_path / "e"),
            "--checkpoint", str(train_dir / "checkpoints" / "best.params"),
            "--eval-manifest", str(other / "val" / "manifest.json"),
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "d_a=3" in err and "d_a=5" in err

    def test_corrupted_checkpoint_magic(self, synth_dir, train_dir, tmp_path, capsys):
        bad = tmp_path / "bad.params"
        blob = bytearray((train_dir / "checkpoints" / "best.params").read_bytes())
        blob[:4] = b"WHAT"
        bad.write_bytes(bytes(blob))
        code = run(["eval", "--output-dir", str(tmp_path / "e2"),
                    "--checkpoint", str(bad),
                    "--eval-manifest", str(synth_dir / "val" / "manifest.json")])
        assert code == 1
        assert "magic" in capsys.readouterr().err


class TestGradcheck:
    def test_default_dims_pass_exit_zero(self, tmp_path, capsys):
        code = run(["gradcheck", "--output-dir", str(tmp_path),
                    "--L", "3", "--d-a", "3", "--d-v", "3", "--k", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASSED" in out
        report = json.loads((tmp_path / "gradcheck_report.json").read_text())
        assert report["passed"] is True

    def test_injected_fault_exit_one(self, tmp_path, capsys):
        code = run(["gradcheck", "--output-dir", str(tmp_path),
                    "--L", "3", "--d-a", "3", "--d-v", "3", "--k", "2",
                    "--inject-fault"])
        assert code == 1
        out = capsys.readouterr().out
        assert "FAILED" in out
        assert "W_ca" in out

    def test_report_lists_each_parameter_once(self, tmp_path):
        run(["gradcheck", "--output-dir", str(tmp_path),
             "--L", "2", "--d-a", "2", "--d-v", "2", "--k", "2"])
        report = json.loads((tmp_path / "gradcheck_report.json").read_text())
        names = [r["parameter"] for r in report["parameters"]]
        assert len(names) == len(set(names)) == 10  # 8 attention + head W/b


class TestSpectrogram:
    @pytest.fixture()
    def wav(self, tmp_path):
        t = np.arange(round(1.07 * 44100)) / 44100
        sig = (0.5 * np.sin(2 * np.pi * 440 * t)).astype(np.float32)
        path = tmp_path / "tone.wav"
        wavfile.write(path, 44100, sig)
        return path

    def test_shape_printed_and_file_written(self, wav, tmp_path, capsys):
        out = tmp_path / "spec"
        code = run(["spectrogram", str(wav), "--output-dir", str(out)])
        assert code == 0
        assert "64 x 107" in capsys.readouterr().out
        from avfusion.data import read_features

        assert read_features(out / "tone.avf").shape == (64, 107)

    def test_too_short_fails(self, tmp_path, capsys):
        path = tmp_path / "short.wav"
        wavfile.write(path, 44100, np.zeros(220, dtype=np.float32))  # 5 ms
        code = run(["spectrogram", str(path), "--output-dir", str(tmp_path / "o")])
        assert code == 1
        assert "too short" in capsys.readouterr().err

    def test_deterministic_output(self, wav, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(["spectrogram", str(wav), "--output-dir", str(out1)])
        run(["spectrogram", str(wav), "--output-dir", str(out2)])
        assert (out1 / "tone.avf").read_bytes() == (out2 / "tone.avf").read_bytes()


class TestConfigSystem:
    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed=3\nn_train=4\nn_val=2\nn_test=2\nL=4\nd_a=2\nd_v=2\n")
        out = tmp_path / "out"
        assert run(["synth", "--config", str(cfg), "--output-dir", str(out),
                    "--seed", "9"]) == 0
        resolved = dict(
            line.split("=", 1)
            for line in (out / "resolved.cfg").read_text().splitlines()
        )
        assert resolved["seed"] == "9"       # flag wins
        assert resolved["n_train"] == "4"    # file wins over default

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("learning_rat=0.1\n")
        code = run(["synth", "--config", str(cfg), "--output-dir", str(tmp_path / "o")])
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_resolved_config_reproduces_run(self, tmp_path):
        out1 = tmp_path / "r1"
        run(["synth", "--output-dir", str(out1), "--seed", "5", *SYNTH_ARGS])
        out2 = tmp_path / "r2"
        # rerun purely from the echoed config, overriding only the out dir
        run(["synth", "--config", str(out1 / "resolved.cfg"),
             "--output-dir", str(out2)])
        # compare everything except resolved.cfg itself (output_dir differs)
        (out1 / "resolved.cfg").unlink()
        (out2 / "resolved.cfg").unlink()
        assert tree_digest(out2) == tree_digest(out1)

    def test_env_var_sets_output_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "from-env"
        monkeypatch.setenv("AVFUSION_OUTPUT_DIR", str(target))
        assert run(["synth", "--seed", "2", *SYNTH_ARGS]) == 0
        assert (target / "train" / "manifest.json").exists()

    def test_usage_error_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--no-such-flag"])
        assert exc.value.code == 2

    def test_missing_subcommand_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


def test_installed_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "avfusion", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout and "gradcheck" in proc.stdout
