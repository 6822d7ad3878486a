"""Audio frontend: resampling and banded log-power spectrograms.

The pipeline, in order: Hann-windowed frames every hop (the tail of the
last frames is zero-padded so every started hop yields a frame), magnitude
squared of the nonnegative-frequency DFT bins, dB conversion with a floor,
aggregation of the bins into equal-width bands (the last band absorbs the
remainder), then mean/variance normalization. At the 44.1 kHz / 20 ms / 10 ms
defaults a 1.07 s clip maps to exactly 64 bands x 107 frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .linalg import Matrix, _freeze

TARGET_RATE = 44100


@dataclass
class SpectrogramConfig:
    sample_rate: int = TARGET_RATE
    dft_length: int = 1024
    window_ms: float = 20.0
    hop_ms: float = 10.0
    bands: int = 64
    db_floor: float = -80.0
    db_epsilon: float = 1e-10
    band_layout: str = "linear"     # or "mel"
    normalization: str = "global"   # "per_band" | "none"

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_bins(self) -> int:
        return self.dft_length // 2 + 1

    def validate(self) -> "SpectrogramConfig":
        if self.window_samples > self.dft_length:
            raise ConfigError(
                f"window ({self.window_samples} samples) exceeds DFT length {self.dft_length}"
            )
        if self.hop_samples > self.window_samples or self.hop_samples < 1:
            raise ConfigError(
                f"hop ({self.hop_samples} samples) must be in [1, window={self.window_samples}]"
            )
        if not (1 <= self.bands <= self.n_bins):
            raise ConfigError(f"bands must be in [1, {self.n_bins}], got {self.bands}")
        if self.band_layout not in ("linear", "mel"):
            raise ConfigError(f"band_layout must be linear or mel, got {self.band_layout!r}")
        if self.normalization not in ("global", "per_band", "none"):
            raise ConfigError(
                f"normalization must be global, per_band or none, got {self.normalization!r}"
            )
        return self


def resample(signal, src_rate: float, target_rate: int = TARGET_RATE) -> np.ndarray:
    """Linear-interpolation resampling; output length round(n*target/src)."""
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    if signal.size == 0:
        raise DataError("resample: empty signal")
    if src_rate <= 0:
        raise ConfigError(f"resample: source rate must be positive, got {src_rate}")
    if src_rate == target_rate:
        return signal.copy()
    n_out = int(round(signal.size * target_rate / src_rate))
    positions = np.arange(n_out) * (src_rate / target_rate)
    return np.interp(positions, np.arange(signal.size), signal)


def frame_count(n_samples: int, config: SpectrogramConfig) -> int:
    """Frames produced for an n-sample signal: one per started hop.

    Every start position s = i*hop with s + hop <= n yields a frame; the
    window may overrun the signal end and is zero-padded there. Requires
    n >= window.
    """
    if n_samples < config.window_samples:
        raise DataError(
            f"signal too short: {n_samples} samples, window is {config.window_samples}"
        )
    return 1 + (n_samples - config.hop_samples) // config.hop_samples


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the standard analysis-window convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _band_edges(config: SpectrogramConfig) -> list[tuple[int, int]]:
    width = config.n_bins // config.bands
    edges = [(b * width, (b + 1) * width) for b in range(config.bands)]
    lo, _ = edges[-1]
    edges[-1] = (lo, config.n_bins)  # final band absorbs the remainder bins
    return edges


def _mel_weights(config: SpectrogramConfig) -> np.ndarray:
    """Triangular mel filterbank over the nonnegative-frequency bins."""
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    nyquist = config.sample_rate / 2.0
    mel_pts = np.linspace(0.0, hz_to_mel(nyquist), config.bands + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(config.n_bins) * config.sample_rate / config.dft_length
    weights = np.zeros((config.bands, config.n_bins))
    for b in range(config.bands):
        left, center, right = hz_pts[b], hz_pts[b + 1], hz_pts[b + 2]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        weights[b] = np.clip(np.minimum(up, down), 0.0, None)
        total = weights[b].sum()
        if total > 0:
            weights[b] /= total
    return weights


def power_frames(signal, config: SpectrogramConfig) -> np.ndarray:
    """Linear power per (frame, bin): |rfft(hann * frame)|^2."""
    signal = np.asarray(signal, dtype=np.float64).reshape(-1)
    n = signal.size
    frames = frame_count(n, config)
    win, hop = config.window_samples, config.hop_samples
    padded = np.concatenate([signal, np.zeros(win)])
    window = _hann(win)
    chunks = np.stack([padded[i * hop: i * hop + win] for i in range(frames)])
    spectra = np.fft.rfft(chunks * window, n=config.dft_length, axis=1)
    return np.abs(spectra) ** 2


def spectrogram(signal, config: SpectrogramConfig | None = None) -> Matrix:
    """Banded log-power spectrogram, shape bands x frames."""
    config = (config or SpectrogramConfig()).validate()
    power = power_frames(signal, config)  # frames x bins

    if config.band_layout == "mel":
        banded_power = power @ _mel_weights(config).T
        banded = 10.0 * np.log10(banded_power + config.db_epsilon)
        banded = np.maximum(banded, config.db_floor)
    else:
        db = 10.0 * np.log10(power + config.db_epsilon)
        db = np.maximum(db, config.db_floor)
        cols = [db[:, lo:hi].mean(axis=1) for lo, hi in _band_edges(config)]
        banded = np.stack(cols, axis=1)

    out = np.ascontiguousarray(banded.T)  # bands x frames
    if config.normalization == "global":
        out = (out - out.mean()) / np.sqrt(max(out.var(), 1e-8))
    elif config.normalization == "per_band":
        mu = out.mean(axis=1, keepdims=True)
        var = np.maximum(out.var(axis=1, keepdims=True), 1e-8)
        out = (out - mu) / np.sqrt(var)
    return _freeze(np.ascontiguousarray(out))


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono PCM16/PCM32/float wave file; returns (float signal, rate)."""
    from scipy.io import wavfile

    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: unsupported audio container: {exc}") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        signal = data / 32768.0
    elif data.dtype == np.int32:
        signal = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        signal = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    return signal, int(rate)
