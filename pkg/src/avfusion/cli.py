"""Command-line interface: synth | train | eval | gradcheck | spectrogram.

Configuration is resolved in layers: built-in defaults, then the
AVFUSION_OUTPUT_DIR environment variable (output directory only), then a
key=value config file (--config), then explicit flags. Unknown config keys
are rejected, and every run writes the fully resolved configuration as
resolved.cfg next to its outputs, so a run can be reproduced from its echo.

Exit status: 0 success, 1 validation or check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .audio import SpectrogramConfig, read_wav, resample, spectrogram
from .data import (
    SynthConfig,
    check_disjoint,
    load_manifest,
    load_split,
    synth_generate,
    write_features,
)
from .errors import AvFusionError, ConfigError
from .gradients import grad_check, seeded_check_instance
from .metrics import evaluate_split
from .models import MODEL_KINDS, JcaDims
from .optim import TrainConfig
from .params_io import read_params, write_params
from .training import train

ENV_OUTPUT_DIR = "AVFUSION_OUTPUT_DIR"


@dataclass
class Key:
    type: type
    default: object
    help: str
    choices: tuple = ()


# Every config-file key, in resolved.cfg order. Flags mirror these as
# --kebab-case.
KEYS: dict[str, Key] = {
    "model": Key(str, "jca", "model kind", MODEL_KINDS),
    "target": Key(str, "valence", "regression target", ("valence", "arousal")),
    "L": Key(int, 8, "clips per sub-sequence"),
    "d_a": Key(int, 16, "audio feature width"),
    "d_v": Key(int, 16, "visual feature width"),
    "k": Key(int, None, "attention hidden size (default: L)"),
    "head_hidden": Key(int, 0, "hidden width of the prediction head (0 = linear)"),
    "learning_rate": Key(float, 1e-3, "optimizer learning rate"),
    "optimizer": Key(str, "adam", "optimizer", ("adam", "sgd")),
    "adam_beta1": Key(float, 0.9, "Adam beta1"),
    "adam_beta2": Key(float, 0.999, "Adam beta2"),
    "adam_epsilon": Key(float, 1e-8, "Adam epsilon"),
    "sgd_momentum": Key(float, 0.8, "SGD momentum"),
    "weight_decay": Key(float, 5e-4, "decoupled weight decay"),
    "batch_size": Key(int, 64, "sub-sequences per batch"),
    "dropout": Key(float, 0.5, "dropout probability on the head input"),
    "max_epochs": Key(int, 50, "epoch cap"),
    "patience": Key(int, 5, "early-stopping patience in epochs"),
    "seed": Key(int, 0, "master seed"),
    "n_train": Key(int, 200, "synthetic training sequences"),
    "n_val": Key(int, 50, "synthetic validation sequences"),
    "n_test": Key(int, 50, "synthetic test sequences"),
    "ar_coeff": Key(float, 0.9, "synthetic latent AR(1) coefficient"),
    "noise_sigma": Key(float, 1.0, "synthetic observation noise"),
    "mask_prob": Key(float, 0.3, "per-clip complementary mask probability"),
    "train_manifest": Key(str, None, "training split manifest path"),
    "val_manifest": Key(str, None, "validation split manifest path"),
    "eval_manifest": Key(str, None, "evaluation split manifest path"),
    "checkpoint": Key(str, None, "parameter checkpoint path"),
    "output_dir": Key(str, "runs", "directory for run outputs"),
    "tol": Key(float, 1e-4, "gradient-check relative tolerance"),
    "fd_step": Key(float, 1e-6, "finite-difference step"),
    "dft_length": Key(int, 1024, "spectrogram DFT length"),
    "window_ms": Key(float, 20.0, "spectrogram window in ms"),
    "hop_ms": Key(float, 10.0, "spectrogram hop in ms"),
    "bands": Key(int, 64, "spectrogram output bands"),
    "band_layout": Key(str, "linear", "band aggregation", ("linear", "mel")),
    "normalization": Key(str, "global", "spectrogram normalization",
                         ("global", "per_band", "none")),
}


def _parse_value(key: str, raw: str):
    spec = KEYS[key]
    try:
        value = spec.type(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {spec.type.__name__}") from exc
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"config key {key}: {value!r} not in {spec.choices}")
    return value


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        lines = Path(path).read_text(encoding="ascii").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = {key: spec.default for key, spec in KEYS.items()}
    env_out = os.environ.get(ENV_OUTPUT_DIR)
    if env_out:
        cfg["output_dir"] = env_out
    if getattr(args, "config", None):
        cfg.update(_read_config_file(args.config))
    for key in KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            if KEYS[key].choices and flag_value not in KEYS[key].choices:
                raise ConfigError(f"{key}: {flag_value!r} not in {KEYS[key].choices}")
            cfg[key] = flag_value
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_resolved(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_fmt(cfg[key])}" for key in KEYS if cfg[key] is not None]
    (out_dir / "resolved.cfg").write_text("\n".join(lines) + "\n", encoding="ascii")


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["learning_rate"], optimizer=cfg["optimizer"],
        adam_beta1=cfg["adam_beta1"], adam_beta2=cfg["adam_beta2"],
        adam_epsilon=cfg["adam_epsilon"], sgd_momentum=cfg["sgd_momentum"],
        weight_decay=cfg["weight_decay"], batch_size=cfg["batch_size"],
        dropout=cfg["dropout"], max_epochs=cfg["max_epochs"],
        patience=cfg["patience"], seed=cfg["seed"], target=cfg["target"],
    ).validate()


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join(missing)}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    out_dir = Path(cfg["output_dir"])
    synth = SynthConfig(
        n_train=cfg["n_train"], n_val=cfg["n_val"], n_test=cfg["n_test"],
        subseq_len=cfg["L"], d_a=cfg["d_a"], d_v=cfg["d_v"],
        ar_coeff=cfg["ar_coeff"], noise_sigma=cfg["noise_sigma"],
        mask_prob=cfg["mask_prob"], seed=cfg["seed"],
    ).validate()
    manifests = synth_generate(synth, out_dir)
    write_resolved(cfg, out_dir)
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest.sequences)} sequences -> {manifest.root / 'manifest.json'}")
    print(f"report: {out_dir / 'synth_report.json'}")
    return 0


def cmd_train(cfg: dict) -> int:
    _require(cfg, "train_manifest", "val_manifest")
    out_dir = Path(cfg["output_dir"])
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir)

    train_man = load_manifest(cfg["train_manifest"])
    val_man = load_manifest(cfg["val_manifest"])
    check_disjoint(train_man, val_man)
    train_set = load_split(train_man)
    val_set = load_split(val_man)
    config = _train_config(cfg)

    history_path = out_dir / "history.tsv"
    with open(history_path, "w", encoding="ascii") as hist_fh:
        hist_fh.write("epoch\ttrain_loss\ttrain_ccc\tval_ccc\n")

        def on_epoch(epoch, history, params):
            line = (f"{epoch}\t{history.train_loss[-1]!r}\t"
                    f"{history.train_ccc[-1]!r}\t{history.val_ccc[-1]!r}")
            hist_fh.write(line + "\n")
            print(f"epoch {epoch:3d}  loss={history.train_loss[-1]:.4f}  "
                  f"train_ccc={history.train_ccc[-1]:.4f}  val_ccc={history.val_ccc[-1]:.4f}")
            write_params(ckpt_dir / f"epoch_{epoch:04d}.params", params)

        best_params, history = train(
            cfg["model"], train_set, val_set, config,
            k=cfg["k"], head_hidden=cfg["head_hidden"], on_epoch=on_epoch,
        )

    write_params(ckpt_dir / "best.params", best_params)
    summary = {
        "model": cfg["model"], "target": cfg["target"],
        "epochs_run": history.epochs_run, "best_epoch": history.best_epoch,
        "best_val_ccc": history.best_val_ccc,
        "stopped_early": history.stopped_early,
        "n_train": len(train_set), "n_val": len(val_set),
    }
    with open(out_dir / "summary.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"best epoch {history.best_epoch} val_ccc={history.best_val_ccc!r} "
          f"-> {ckpt_dir / 'best.params'}")
    return 0


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "checkpoint", "eval_manifest")
    out_dir = Path(cfg["output_dir"])
    params = read_params(cfg["checkpoint"])
    manifest = load_manifest(cfg["eval_manifest"])
    dims = params.dims
    if (manifest.d_a, manifest.d_v, manifest.subseq_len) != (dims.d_a, dims.d_v, dims.L):
        raise ConfigError(
            f"checkpoint dims (L={dims.L}, d_a={dims.d_a}, d_v={dims.d_v}) do not match "
            f"manifest dims (L={manifest.subseq_len}, d_a={manifest.d_a}, d_v={manifest.d_v})"
        )
    subs = load_split(manifest)
    report = evaluate_split(params, subs, cfg["target"])
    write_resolved(cfg, out_dir)
    payload = {
        "target": report.target, "n": report.n, "rho_c": report.rho_c,
        "degenerate": report.degenerate, "split": manifest.split,
        "model": params.kind,
    }
    with open(out_dir / "eval_report.json", "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"target={report.target} n={report.n} rho_c={report.rho_c!r} "
          f"degenerate={report.degenerate}")
    return 0


def cmd_gradcheck(cfg: dict, inject_fault: bool = False) -> int:
    out_dir = Path(cfg["output_dir"])
    dims = JcaDims(L=cfg["L"], d_a=cfg["d_a"], d_v=cfg["d_v"],
                   k=cfg["k"] if cfg["k"] is not None else cfg["L"])
    params, batch = seeded_check_instance(
        cfg["model"], dims, seed=cfg["seed"], head_hidden=cfg["head_hidden"],
    )
    corrupt = None
    if inject_fault:
        corrupt = "head_W0" if cfg["model"] == "concat" else "W_ca"
    report = grad_check(params, batch, cfg["target"], tol=cfg["tol"],
                        step=cfg["fd_step"], corrupt=corrupt)
    print(report.as_text_table())
    write_resolved(cfg, out_dir)
    with open(out_dir / "gradcheck_report.json", "w", encoding="ascii") as fh:
        json.dump({"tol": report.tol, "step": report.step,
                   "passed": report.passed, "parameters": report.as_records()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"gradient check {'PASSED' if report.passed else 'FAILED'} "
          f"(tol={report.tol!r}, step={report.step!r})")
    return 0 if report.passed else 1


def cmd_spectrogram(cfg: dict, input_path: str, output: str | None) -> int:
    out_dir = Path(cfg["output_dir"])
    signal, rate = read_wav(input_path)
    signal = resample(signal, rate)
    spec_cfg = SpectrogramConfig(
        dft_length=cfg["dft_length"], window_ms=cfg["window_ms"],
        hop_ms=cfg["hop_ms"], bands=cfg["bands"],
        band_layout=cfg["band_layout"], normalization=cfg["normalization"],
    ).validate()
    spec = spectrogram(signal, spec_cfg)
    if output is None:
        out_dir.mkdir(parents=True, exist_ok=True)
        output = out_dir / (Path(input_path).stem + ".avf")
    write_features(output, spec)
    write_resolved(cfg, out_dir)
    print(f"{spec.shape[0]} x {spec.shape[1]}")
    print(f"wrote {output}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_key_flags(parser: argparse.ArgumentParser, keys) -> None:
    for key in keys:
        spec = KEYS[key]
        kwargs = {"default": None, "help": spec.help, "dest": key}
        if spec.choices:
            kwargs["choices"] = spec.choices
        if spec.type in (int, float):
            kwargs["type"] = spec.type
        parser.add_argument(f"--{key.replace('_', '-')}", **kwargs)


_TRAIN_KEYS = ("learning_rate", "optimizer", "adam_beta1", "adam_beta2",
               "adam_epsilon", "sgd_momentum", "weight_decay", "batch_size",
               "dropout", "max_epochs", "patience")
_DIM_KEYS = ("L", "d_a", "d_v", "k", "head_hidden")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avfusion",
        description="Audio-visual fusion models with a synthetic benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file (flags win)")
        _add_key_flags(p, ("seed", "output_dir"))

    p_synth = sub.add_parser("synth", help="generate the synthetic benchmark")
    common(p_synth)
    _add_key_flags(p_synth, ("n_train", "n_val", "n_test", "L", "d_a", "d_v",
                             "ar_coeff", "noise_sigma", "mask_prob"))

    p_train = sub.add_parser("train", help="train a fusion model")
    common(p_train)
    _add_key_flags(p_train, ("model", "target", "train_manifest", "val_manifest",
                             "k", "head_hidden") + _TRAIN_KEYS)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval)
    _add_key_flags(p_eval, ("target", "checkpoint", "eval_manifest"))

    p_grad = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    common(p_grad)
    _add_key_flags(p_grad, ("model", "target", "tol", "fd_step") + _DIM_KEYS)
    p_grad.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p_spec = sub.add_parser("spectrogram", help="extract a banded log-power spectrogram")
    common(p_spec)
    p_spec.add_argument("input", help="mono wave file")
    p_spec.add_argument("--output", help="output AVF1 path (default: <output-dir>/<stem>.avf)")
    _add_key_flags(p_spec, ("dft_length", "window_ms", "hop_ms", "bands",
                            "band_layout", "normalization"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, inject_fault=args.inject_fault)
        if args.command == "spectrogram":
            return cmd_spectrogram(cfg, args.input, args.output)
        raise ConfigError(f"unknown command {args.command!r}")
    except (AvFusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
