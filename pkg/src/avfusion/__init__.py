"""Audio-visual fusion for valence/arousal regression.

Joint cross-attention fusion with concatenation and vanilla cross-attention
baselines, a CCC training objective, finite-difference gradient
verification, a synthetic complementary-modality benchmark, and a
spectrogram frontend. See the estimators module for the scikit-learn style
API and the cli module for the command-line surface.
"""

from .audio import SpectrogramConfig, resample, spectrogram
from .data import SubSequence, SynthConfig, synth_generate, synth_subsequences
from .estimators import (
    CrossAttentionRegressor,
    FeatureConcatRegressor,
    JointCrossAttentionRegressor,
)
from .gradients import GradCheckReport, GradientSet, finite_diff_grads, grad_check, loss_and_grads
from .metrics import CccReport, CccStats, ccc, ccc_loss, evaluate_split
from .models import (
    JcaActivations,
    JcaDims,
    ModelParams,
    concat_forward,
    forward,
    predict,
    vanilla_ca_forward,
    xavier_init,
)
from .optim import TrainConfig, adam_step, sgd_step
from .params_io import read_params, write_params
from .training import TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "CccReport", "CccStats", "CrossAttentionRegressor", "FeatureConcatRegressor",
    "GradCheckReport", "GradientSet", "JcaActivations", "JcaDims",
    "JointCrossAttentionRegressor", "ModelParams", "SpectrogramConfig",
    "SubSequence", "SynthConfig", "TrainConfig", "TrainHistory",
    "adam_step", "ccc", "ccc_loss", "concat_forward", "evaluate_split",
    "finite_diff_grads", "forward", "grad_check", "loss_and_grads", "predict",
    "read_params", "resample", "sgd_step", "spectrogram", "synth_generate",
    "synth_subsequences", "train", "vanilla_ca_forward", "write_params",
    "xavier_init",
]
