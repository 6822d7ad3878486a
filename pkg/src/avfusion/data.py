"""Dataset plumbing: feature files, labels, segmentation, synthetic benchmark.

Feature files use the AVF1 binary format:

    bytes 0-3   magic "AVF1"
    u32         version (= 1)
    u32         rows
    u32         cols
    payload     rows*cols float64, little-endian, row-major

Labels are CSV text, one line per frame: "frame_index,valence,arousal" with
values in [-1, 1]; a value of -5 marks an unannotated frame and drops the
line. Manifests are JSON files listing per-sequence file records with paths
relative to the manifest's directory.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    DataError,
    TruncatedFileError,
    VersionMismatchError,
)
from .linalg import Matrix, as_matrix

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"AVF1"
FEATURE_VERSION = 1
UNANNOTATED = -5.0


@dataclass
class SubSequence:
    """L clips of paired modality features with per-clip targets."""

    seq_id: str
    audio: Matrix   # L x d_a
    visual: Matrix  # L x d_v
    valence: np.ndarray  # (L,)
    arousal: np.ndarray  # (L,)

    def __post_init__(self):
        self.audio = as_matrix(self.audio, "audio")
        self.visual = as_matrix(self.visual, "visual")
        self.valence = np.asarray(self.valence, dtype=np.float64).reshape(-1)
        self.arousal = np.asarray(self.arousal, dtype=np.float64).reshape(-1)
        L = self.audio.shape[0]
        if self.visual.shape[0] != L or len(self.valence) != L or len(self.arousal) != L:
            raise DataError(
                f"{self.seq_id}: inconsistent clip counts "
                f"(audio {self.audio.shape[0]}, visual {self.visual.shape[0]}, "
                f"valence {len(self.valence)}, arousal {len(self.arousal)})"
            )
        for name, lab in (("valence", self.valence), ("arousal", self.arousal)):
            if not np.isfinite(lab).all() or np.abs(lab).max() > 1.0:
                raise DataError(f"{self.seq_id}: {name} labels outside [-1, 1]")

    @property
    def L(self) -> int:
        return self.audio.shape[0]

    def targets(self, target: str) -> np.ndarray:
        if target == "valence":
            return self.valence
        if target == "arousal":
            return self.arousal
        raise ConfigError(f"unknown target {target!r}, expected 'valence' or 'arousal'")


# ---------------------------------------------------------------------------
# AVF1 feature files
# ---------------------------------------------------------------------------

def write_features(path, matrix) -> None:
    mat = as_matrix(matrix, "features")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, mat.shape[0], mat.shape[1]))
        fh.write(mat.astype("<f8").tobytes())


def read_features(path) -> Matrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != FEATURE_MAGIC:
        raise BadMagicError(
            f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}"
        )
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: header truncated ({len(blob)} bytes)")
    version, rows, cols = struct.unpack("<III", blob[4:16])
    if version != FEATURE_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported version {version}, expected {FEATURE_VERSION}"
        )
    expected = 16 + rows * cols * 8
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: payload truncated ({len(blob)} bytes, expected {expected})"
        )
    if len(blob) > expected:
        raise DataError(f"{path}: {len(blob) - expected} trailing bytes")
    data = np.frombuffer(blob, dtype="<f8", offset=16, count=rows * cols)
    return as_matrix(data.reshape(rows, cols), str(path))


# ---------------------------------------------------------------------------
# label files
# ---------------------------------------------------------------------------

def read_labels(path):
    """Parse a label CSV; returns (frame_indices, valence, arousal) arrays.

    Unannotated frames (either value equal to -5) are dropped.
    """
    idx, val, aro = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                frame = int(parts[0])
                v = float(parts[1])
                a = float(parts[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if v == UNANNOTATED or a == UNANNOTATED:
                continue
            if not (-1.0 <= v <= 1.0) or not (-1.0 <= a <= 1.0):
                raise DataError(
                    f"{path}:{lineno}: label out of range [-1, 1]: ({v}, {a})"
                )
            idx.append(frame)
            val.append(v)
            aro.append(a)
    return (np.asarray(idx, dtype=np.int64),
            np.asarray(val, dtype=np.float64),
            np.asarray(aro, dtype=np.float64))


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def segment(audio, visual, valence, arousal, clip_len: int, subseq_len: int,
            seq_id: str = "seq") -> list[SubSequence]:
    """Group per-frame features into clips, then clips into sub-sequences.

    Clip features and labels are means over the clip's frames; a trailing
    partial clip or sub-sequence is dropped. Returns [] (with a warning)
    when fewer frames than one full sub-sequence are available.
    """
    if clip_len < 1 or subseq_len < 1:
        raise ConfigError("segment: clip_len and subseq_len must be >= 1")
    audio = as_matrix(audio, "audio")
    visual = as_matrix(visual, "visual")
    valence = np.asarray(valence, dtype=np.float64).reshape(-1)
    arousal = np.asarray(arousal, dtype=np.float64).reshape(-1)
    T = audio.shape[0]
    if visual.shape[0] != T or len(valence) != T or len(arousal) != T:
        raise DataError(
            f"{seq_id}: frame count mismatch (audio {T}, visual {visual.shape[0]}, "
            f"labels {len(valence)}/{len(arousal)})"
        )
    frames_per_sub = clip_len * subseq_len
    n_subs = T // frames_per_sub
    if n_subs == 0:
        log.warning("%s: only %d frames, fewer than one sub-sequence (%d); skipping",
                    seq_id, T, frames_per_sub)
        return []

    def clip_means(arr2d, n_clips):
        used = arr2d[: n_clips * clip_len]
        return used.reshape(n_clips, clip_len, -1).mean(axis=1)

    n_clips = n_subs * subseq_len
    a_clips = clip_means(audio, n_clips)
    v_clips = clip_means(visual, n_clips)
    val_clips = clip_means(valence[:, None], n_clips)[:, 0]
    aro_clips = clip_means(arousal[:, None], n_clips)[:, 0]

    subs = []
    for s in range(n_subs):
        lo, hi = s * subseq_len, (s + 1) * subseq_len
        subs.append(SubSequence(
            seq_id=f"{seq_id}#{s}",
            audio=a_clips[lo:hi], visual=v_clips[lo:hi],
            valence=val_clips[lo:hi], arousal=aro_clips[lo:hi],
        ))
    return subs


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class SequenceRecord:
    seq_id: str
    audio: str   # path relative to the manifest directory
    visual: str
    labels: str
    frames: int


@dataclass
class DatasetManifest:
    split: str
    d_a: int
    d_v: int
    clip_len: int
    subseq_len: int
    sequences: list[SequenceRecord]
    root: Path = field(default_factory=Path)

    def to_json(self) -> dict:
        return {
            "split": self.split, "d_a": self.d_a, "d_v": self.d_v,
            "clip_len": self.clip_len, "subseq_len": self.subseq_len,
            "sequences": [vars(rec) for rec in self.sequences],
        }


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest: files must exist and declare the
    manifest's feature dimensions."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="ascii"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable manifest: {exc}") from exc
    required = {"split", "d_a", "d_v", "clip_len", "subseq_len", "sequences"}
    missing = required - spec.keys()
    if missing:
        raise DataError(f"{path}: manifest missing keys {sorted(missing)}")
    manifest = DatasetManifest(
        split=spec["split"], d_a=int(spec["d_a"]), d_v=int(spec["d_v"]),
        clip_len=int(spec["clip_len"]), subseq_len=int(spec["subseq_len"]),
        sequences=[SequenceRecord(**rec) for rec in spec["sequences"]],
        root=path.parent,
    )
    for rec in manifest.sequences:
        for kind, rel, width in (("audio", rec.audio, manifest.d_a),
                                 ("visual", rec.visual, manifest.d_v)):
            fpath = manifest.root / rel
            if not fpath.exists():
                raise DataError(f"{path}: missing {kind} file {rel}")
            mat = read_features(fpath)
            if mat.shape != (rec.frames, width):
                raise DataError(
                    f"{path}: {rel} has shape {tuple(mat.shape)}, "
                    f"expected {(rec.frames, width)}"
                )
        if not (manifest.root / rec.labels).exists():
            raise DataError(f"{path}: missing label file {rec.labels}")
    return manifest


def check_disjoint(*manifests: DatasetManifest) -> None:
    seen: dict[str, str] = {}
    for man in manifests:
        for rec in man.sequences:
            if rec.seq_id in seen:
                raise DataError(
                    f"sequence {rec.seq_id!r} appears in splits "
                    f"{seen[rec.seq_id]!r} and {man.split!r}"
                )
            seen[rec.seq_id] = man.split


def load_split(manifest: DatasetManifest) -> list[SubSequence]:
    """Materialize every sub-sequence of a manifest, in manifest order.

    Feature rows are aligned to annotated frames via the label file's frame
    indices before segmentation.
    """
    subs: list[SubSequence] = []
    for rec in manifest.sequences:
        audio = read_features(manifest.root / rec.audio)
        visual = read_features(manifest.root / rec.visual)
        idx, val, aro = read_labels(manifest.root / rec.labels)
        if len(idx) and idx.max() >= audio.shape[0]:
            raise DataError(
                f"{rec.seq_id}: label frame index {idx.max()} out of range "
                f"for {audio.shape[0]} feature rows"
            )
        subs.extend(segment(
            audio[idx], visual[idx], val, aro,
            manifest.clip_len, manifest.subseq_len, seq_id=rec.seq_id,
        ))
    return subs


# ---------------------------------------------------------------------------
# synthetic complementary-modality benchmark
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    """Generator settings; one generated sequence is one sub-sequence.

    Targets are tanh-squashed AR(1) latents (one per regression target);
    each modality observes both targets through fixed random projections
    shared by all splits, plus isotropic noise. Masking zeroes one
    modality's features on a clip, never both (complementary), so the
    targets stay recoverable from the remaining modality.
    """

    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    subseq_len: int = 8
    d_a: int = 16
    d_v: int = 16
    ar_coeff: float = 0.9
    noise_sigma: float = 1.0
    mask_prob: float = 0.3
    seed: int = 0

    def validate(self) -> "SynthConfig":
        if not (0.0 <= self.mask_prob <= 0.5):
            raise ConfigError(f"mask_prob must be in [0, 0.5], got {self.mask_prob}")
        if not (-1.0 < self.ar_coeff < 1.0):
            raise ConfigError(f"ar_coeff must be in (-1, 1), got {self.ar_coeff}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("every split needs at least one sequence")
        if min(self.subseq_len, self.d_a, self.d_v) < 1:
            raise ConfigError("subseq_len, d_a, d_v must all be >= 1")
        return self

    def projections(self):
        """Fixed target-to-feature projections, shared across splits."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xA0]))
        return {
            "audio": rng.standard_normal((2, self.d_a)),
            "visual": rng.standard_normal((2, self.d_v)),
        }


_SPLIT_TAG = {"train": 1, "val": 2, "test": 3}


def _ar1(rng, n: int, rho: float) -> np.ndarray:
    z = np.empty(n)
    z[0] = rng.standard_normal()
    innov = rng.standard_normal(n - 1) if n > 1 else np.empty(0)
    scale = np.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        z[i] = rho * z[i - 1] + scale * innov[i - 1]
    return z


def synth_subsequences(config: SynthConfig, split: str) -> list[SubSequence]:
    """Generate one split in memory; identical content to the written files."""
    config.validate()
    if split not in _SPLIT_TAG:
        raise ConfigError(f"unknown split {split!r}")
    n_seq = {"train": config.n_train, "val": config.n_val, "test": config.n_test}[split]
    proj = config.projections()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _SPLIT_TAG[split]]))
    L = config.subseq_len
    p = config.mask_prob
    subs = []
    for s in range(n_seq):
        targets = np.tanh(np.stack([
            _ar1(rng, L, config.ar_coeff),   # valence latent
            _ar1(rng, L, config.ar_coeff),   # arousal latent
        ]))  # 2 x L
        audio = targets.T @ proj["audio"] + config.noise_sigma * rng.standard_normal((L, config.d_a))
        visual = targets.T @ proj["visual"] + config.noise_sigma * rng.standard_normal((L, config.d_v))
        u = rng.random(L)
        audio[u < p] = 0.0                      # audio masked
        visual[(u >= p) & (u < 2 * p)] = 0.0    # visual masked, never both
        subs.append(SubSequence(
            seq_id=f"{split}-{s:05d}",
            audio=audio, visual=visual,
            valence=targets[0], arousal=targets[1],
        ))
    return subs


def least_squares_probe(subsequences, target: str, modality: str = "both") -> float:
    """CCC of an in-sample least-squares linear fit on raw clip features.

    The recoverability oracle: with an intercept, richer feature sets can
    only raise the in-sample CCC, so both-modality >= single-modality.
    """
    from .metrics import ccc  # avoid import cycle at module load

    blocks = {"audio": lambda s: s.audio, "visual": lambda s: s.visual,
              "both": lambda s: np.concatenate([s.audio, s.visual], axis=1)}
    if modality not in blocks:
        raise ConfigError(f"unknown modality {modality!r}")
    X = np.concatenate([blocks[modality](s) for s in subsequences], axis=0)
    y = np.concatenate([s.targets(target) for s in subsequences])
    design = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return ccc(design @ coef, y).rho_c


def synth_generate(config: SynthConfig, out_dir) -> dict[str, DatasetManifest]:
    """Write the three synthetic splits plus a generation report.

    Layout: <out_dir>/<split>/manifest.json with features/ and labels/
    subdirectories. The report records the config and least-squares probe
    CCCs on the training split, and generation fails if the combined-modality
    probe falls below the best single modality.
    """
    config.validate()
    out_dir = Path(out_dir)
    manifests = {}
    split_subs = {}
    for split in ("train", "val", "test"):
        subs = synth_subsequences(config, split)
        split_subs[split] = subs
        split_dir = out_dir / split
        (split_dir / "features").mkdir(parents=True, exist_ok=True)
        (split_dir / "labels").mkdir(parents=True, exist_ok=True)
        records = []
        for sub in subs:
            stem = sub.seq_id
            write_features(split_dir / "features" / f"{stem}.audio.avf", sub.audio)
            write_features(split_dir / "features" / f"{stem}.visual.avf", sub.visual)
            with open(split_dir / "labels" / f"{stem}.csv", "w", encoding="ascii") as fh:
                for i in range(sub.L):
                    # repr of a Python float round-trips bit-exactly
                    fh.write(f"{i},{float(sub.valence[i])!r},{float(sub.arousal[i])!r}\n")
            records.append(SequenceRecord(
                seq_id=stem,
                audio=f"features/{stem}.audio.avf",
                visual=f"features/{stem}.visual.avf",
                labels=f"labels/{stem}.csv",
                frames=sub.L,
            ))
        manifest = DatasetManifest(
            split=split, d_a=config.d_a, d_v=config.d_v,
            clip_len=1, subseq_len=config.subseq_len,
            sequences=records, root=split_dir,
        )
        save_manifest(manifest, split_dir / "manifest.json")
        manifests[split] = manifest
    check_disjoint(*manifests.values())

    probes = {}
    for target in ("valence", "arousal"):
        probes[target] = {
            mod: least_squares_probe(split_subs["train"], target, mod)
            for mod in ("audio", "visual", "both")
        }
        if probes[target]["both"] < max(probes[target]["audio"], probes[target]["visual"]) - 1e-9:
            raise DataError(
                f"recoverability violated for {target}: combined probe "
                f"{probes[target]['both']:.4f} below single-modality best"
            )
    report = {
        "config": {k: getattr(config, k) for k in vars(config)},
        "splits": {split: len(split_subs[split]) for split in split_subs},
        "train_probe_ccc": probes,
    }
    with open(out_dir / "synth_report.json", "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifests
