import numpy as np
import pytest

from avfusion.data import (
    SubSequence,
    SynthConfig,
    check_disjoint,
    least_squares_probe,
    load_manifest,
    load_split,
    read_features,
    read_labels,
    segment,
    synth_generate,
    synth_subsequences,
    write_features,
)
from avfusion.errors import (
    BadMagicError,
    ConfigError,
    DataError,
    TruncatedFileError,
    VersionMismatchError,
)


class TestFeatureFiles:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        mat = rng.standard_normal((7, 3))
        path = tmp_path / "m.avf"
        write_features(path, mat)
        assert np.array_equal(read_features(path), mat)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.avf"
        path.write_bytes(b"XVF1" + b"\x00" * 20)
        with pytest.raises(BadMagicError, match="XVF1"):
            read_features(path)

    def test_truncated_payload(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "t.avf"
        write_features(path, rng.standard_normal((4, 4)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(TruncatedFileError):
            read_features(path)

    def test_version_mismatch(self, tmp_path):
        import struct

        path = tmp_path / "v.avf"
        path.write_bytes(b"AVF1" + struct.pack("<III", 9, 1, 1) + b"\x00" * 8)
        with pytest.raises(VersionMismatchError):
            read_features(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "x.avf"
        write_features(path, np.ones((2, 2)))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(DataError):
            read_features(path)


class TestLabels:
    def test_parse(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("0,0.5,-0.25\n1,-1,1\n")
        idx, val, aro = read_labels(path)
        assert idx.tolist() == [0, 1]
        assert val.tolist() == [0.5, -1.0]
        assert aro.tolist() == [-0.25, 1.0]

    def test_sentinel_dropped(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("0,0.5,0.5\n3,-5,-5\n4,0.1,0.2\n")
        idx, val, aro = read_labels(path)
        assert idx.tolist() == [0, 4]

    def test_out_of_range(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("4,1.2,0\n")
        with pytest.raises(DataError, match="range"):
            read_labels(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("0,0.5,0.5\nnot-a-number,0,0\n")
        with pytest.raises(DataError, match=":2"):
            read_labels(path)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("0,0.5\n")
        with pytest.raises(DataError, match="3 fields"):
            read_labels(path)


class TestSegmentation:
    def make_frames(self, T, d=2, seed=0):
        rng = np.random.default_rng(seed)
        return (rng.standard_normal((T, d)), rng.standard_normal((T, d)),
                rng.uniform(-1, 1, T), rng.uniform(-1, 1, T))

    def test_exact_multiple_gives_two_subsequences(self):
        clip_len, L = 3, 4
        audio, visual, val, aro = self.make_frames(2 * clip_len * L)
        subs = segment(audio, visual, val, aro, clip_len, L)
        assert len(subs) == 2
        assert all(s.L == L for s in subs)

    def test_trailing_frame_dropped(self):
        clip_len, L = 3, 4
        audio, visual, val, aro = self.make_frames(clip_len * L + 1)
        subs = segment(audio, visual, val, aro, clip_len, L)
        assert len(subs) == 1

    def test_constant_input_preserved(self):
        T, clip_len, L = 24, 3, 4
        audio = np.full((T, 2), 0.7)
        visual = np.full((T, 2), -0.2)
        val = np.full(T, 0.5)
        aro = np.full(T, -0.5)
        subs = segment(audio, visual, val, aro, clip_len, L)
        np.testing.assert_allclose(subs[0].audio, 0.7)
        np.testing.assert_allclose(subs[0].valence, 0.5)

    def test_clip_features_are_frame_means(self):
        audio, visual, val, aro = self.make_frames(6)
        subs = segment(audio, visual, val, aro, clip_len=3, subseq_len=2)
        np.testing.assert_allclose(subs[0].audio[0], audio[:3].mean(axis=0))
        np.testing.assert_allclose(subs[0].audio[1], audio[3:6].mean(axis=0))

    def test_mass_conservation(self):
        clip_len, L = 2, 3
        audio, visual, val, aro = self.make_frames(4 * clip_len * L + 3)
        subs = segment(audio, visual, val, aro, clip_len, L)
        retained = 4 * clip_len * L
        mean_clip = np.mean(np.concatenate([s.valence for s in subs]))
        assert abs(mean_clip - val[:retained].mean()) < 1e-12

    def test_too_short_warns_and_returns_empty(self, caplog):
        audio, visual, val, aro = self.make_frames(5)
        with caplog.at_level("WARNING"):
            subs = segment(audio, visual, val, aro, clip_len=3, subseq_len=4)
        assert subs == []
        assert "fewer than one sub-sequence" in caplog.text

    def test_modality_length_mismatch(self):
        audio, visual, val, aro = self.make_frames(12)
        with pytest.raises(DataError):
            segment(audio[:10], visual, val, aro, 3, 4)


class TestSubSequence:
    def test_label_range_enforced(self):
        with pytest.raises(DataError):
            SubSequence(seq_id="s", audio=np.ones((2, 1)), visual=np.ones((2, 1)),
                        valence=np.array([0.0, 1.5]), arousal=np.zeros(2))

    def test_clip_count_consistency(self):
        with pytest.raises(DataError):
            SubSequence(seq_id="s", audio=np.ones((2, 1)), visual=np.ones((3, 1)),
                        valence=np.zeros(2), arousal=np.zeros(2))


class TestSynthetic:
    def test_deterministic_in_memory(self):
        cfg = SynthConfig(n_train=4, n_val=2, n_test=2, subseq_len=4, d_a=3, d_v=3, seed=9)
        a = synth_subsequences(cfg, "train")
        b = synth_subsequences(cfg, "train")
        for s, t in zip(a, b):
            assert np.array_equal(s.audio, t.audio)
            assert np.array_equal(s.valence, t.valence)

    def test_splits_differ(self):
        cfg = SynthConfig(n_train=4, n_val=4, n_test=2, subseq_len=4, seed=9)
        tr = synth_subsequences(cfg, "train")
        va = synth_subsequences(cfg, "val")
        assert not np.array_equal(tr[0].audio, va[0].audio)

    def test_mask_complementary(self):
        cfg = SynthConfig(n_train=40, n_val=2, n_test=2, subseq_len=8,
                          mask_prob=0.5, seed=3)
        subs = synth_subsequences(cfg, "train")
        masked_a = masked_v = 0
        for s in subs:
            a_masked = (s.audio == 0).all(axis=1)
            v_masked = (s.visual == 0).all(axis=1)
            assert not (a_masked & v_masked).any()
            masked_a += a_masked.sum()
            masked_v += v_masked.sum()
        total = len(subs) * 8
        assert 0.4 < masked_a / total < 0.6
        assert 0.4 < masked_v / total < 0.6

    def test_mask_probability_zero(self):
        cfg = SynthConfig(n_train=10, n_val=2, n_test=2, mask_prob=0.0, seed=0)
        subs = synth_subsequences(cfg, "train")
        for s in subs:
            assert not (s.audio == 0).all(axis=1).any()
            assert not (s.visual == 0).all(axis=1).any()

    def test_noiseless_single_modality_probe(self):
        # least-squares oracle: with sigma=0 and no masking each modality
        # spans the targets exactly
        cfg = SynthConfig(n_train=60, n_val=2, n_test=2, noise_sigma=0.0,
                          mask_prob=0.0, seed=5)
        subs = synth_subsequences(cfg, "train")
        assert least_squares_probe(subs, "valence", "audio") >= 0.99
        assert least_squares_probe(subs, "valence", "visual") >= 0.99
        assert least_squares_probe(subs, "arousal", "audio") >= 0.99

    def test_masked_combined_probe_beats_single(self):
        cfg = SynthConfig(n_train=80, n_val=2, n_test=2, seed=6)
        subs = synth_subsequences(cfg, "train")
        both = least_squares_probe(subs, "valence", "both")
        single = max(least_squares_probe(subs, "valence", "audio"),
                     least_squares_probe(subs, "valence", "visual"))
        assert both > single

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SynthConfig(mask_prob=0.6).validate()
        with pytest.raises(ConfigError):
            SynthConfig(ar_coeff=1.0).validate()
        with pytest.raises(ConfigError):
            SynthConfig(n_val=0).validate()


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = SynthConfig(n_train=6, n_val=3, n_test=2, subseq_len=4,
                      d_a=3, d_v=3, seed=11)
    manifests = synth_generate(cfg, out)
    return cfg, out, manifests


class TestSynthGenerate:
    def test_manifests_validate(self, generated):
        _, out, _ = generated
        for split in ("train", "val", "test"):
            man = load_manifest(out / split / "manifest.json")
            assert man.split == split

    def test_split_disjointness(self, generated):
        _, out, _ = generated
        mans = [load_manifest(out / s / "manifest.json") for s in ("train", "val", "test")]
        check_disjoint(*mans)

    def test_report_written(self, generated):
        import json

        _, out, _ = generated
        report = json.loads((out / "synth_report.json").read_text())
        assert report["splits"] == {"train": 6, "val": 3, "test": 2}
        assert "both" in report["train_probe_ccc"]["valence"]

    def test_files_round_trip_to_memory(self, generated):
        cfg, out, _ = generated
        in_memory = synth_subsequences(cfg, "val")
        loaded = load_split(load_manifest(out / "val" / "manifest.json"))
        assert len(loaded) == len(in_memory)
        for a, b in zip(loaded, in_memory):
            assert np.array_equal(a.audio, b.audio)
            assert np.array_equal(a.visual, b.visual)
            assert np.array_equal(a.valence, b.valence)
            assert np.array_equal(a.arousal, b.arousal)

    def test_regenerate_identical_bytes(self, tmp_path):
        import hashlib

        cfg = SynthConfig(n_train=3, n_val=2, n_test=2, subseq_len=4,
                          d_a=2, d_v=2, seed=4)

        def digest(root):
            h = hashlib.sha256()
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    h.update(p.relative_to(root).as_posix().encode())
                    h.update(p.read_bytes())
            return h.hexdigest()

        synth_generate(cfg, tmp_path / "a")
        synth_generate(cfg, tmp_path / "b")
        assert digest(tmp_path / "a") == digest(tmp_path / "b")


class TestManifestValidation:
    def test_missing_file_detected(self, tmp_path):
        cfg = SynthConfig(n_train=2, n_val=1, n_test=1, subseq_len=4, seed=0)
        synth_generate(cfg, tmp_path)
        victim = next((tmp_path / "train" / "features").glob("*.audio.avf"))
        victim.unlink()
        with pytest.raises(DataError, match="missing"):
            load_manifest(tmp_path / "train" / "manifest.json")

    def test_dim_mismatch_detected(self, tmp_path):
        cfg = SynthConfig(n_train=2, n_val=1, n_test=1, subseq_len=4, seed=0)
        synth_generate(cfg, tmp_path)
        victim = next((tmp_path / "train" / "features").glob("*.audio.avf"))
        write_features(victim, np.zeros((4, 2)))  # wrong width
        with pytest.raises(DataError, match="shape"):
            load_manifest(tmp_path / "train" / "manifest.json")

    def test_duplicate_sequence_ids_rejected(self, tmp_path):
        cfg = SynthConfig(n_train=2, n_val=1, n_test=1, subseq_len=4, seed=0)
        manifests = synth_generate(cfg, tmp_path)
        dup = manifests["train"]
        dup.split = "val"
        with pytest.raises(DataError, match="appears in splits"):
            check_disjoint(manifests["train"], dup)
