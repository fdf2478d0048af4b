"""Time series -> power lofargram conversion and ground-truth line maps.

A lofargram is a T x K image: T windowed-DFT rows (time slots) over the
first K = n_fft/2 one-sided power bins, log-compressed and min-max
mapped into [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError
from .synthesis import FrequencyTrack

EPS_FLOOR = 1e-12


@dataclass(frozen=True)
class SpectralConfig:
    window_len: int
    hop: int
    n_fft: int
    window: str = "hann"     # "rectangular" | "hann"

    def __post_init__(self):
        if not (0 < self.hop <= self.window_len <= self.n_fft):
            raise ConfigError("need 0 < hop <= window_len <= n_fft")
        if self.n_fft & (self.n_fft - 1):
            raise ConfigError("n_fft must be a power of two")
        if self.window not in ("rectangular", "hann"):
            raise ConfigError(f"unknown window {self.window!r}")

    @property
    def k_bins(self) -> int:
        return self.n_fft // 2

    def n_samples(self, t_slots: int) -> int:
        return self.hop * (t_slots - 1) + self.window_len


@dataclass(frozen=True)
class Lofargram:
    pixels: np.ndarray       # (T, K) in [0, 255]
    source_id: str = ""


@dataclass(frozen=True)
class LineMap:
    mask: np.ndarray         # (T, K) of {0, 1}


def _taper(cfg: SpectralConfig) -> np.ndarray:
    if cfg.window == "rectangular":
        return np.ones(cfg.window_len)
    n = np.arange(cfg.window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / cfg.window_len)  # periodic Hann


def stft_power(samples: np.ndarray, cfg: SpectralConfig) -> np.ndarray:
    """One-sided power spectrogram, rows = time slots, cols = bins 0..K-1."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) < cfg.window_len:
        raise DataFormatError("input shorter than one analysis window")
    t_slots = (len(samples) - cfg.window_len) // cfg.hop + 1
    win = _taper(cfg)
    frames = np.stack([samples[t * cfg.hop : t * cfg.hop + cfg.window_len] for t in range(t_slots)])
    spec = np.fft.rfft(frames * win, n=cfg.n_fft, axis=1)[:, : cfg.k_bins]
    return np.abs(spec) ** 2


def power_to_lofargram(power: np.ndarray, source_id: str = "") -> Lofargram:
    """Log-compress and min-max map to [0, 255].

    The power is first normalized by its max so the result is invariant
    under positive scaling (exactly so for power-of-two scale factors).
    Constant input maps to all zeros.
    """
    power = np.asarray(power, dtype=float)
    if np.any(power < 0):
        raise DataFormatError("power must be nonnegative")
    peak = power.max()
    if peak > 0:
        power = power / peak
    logp = np.log10(power + EPS_FLOOR)
    lo, hi = logp.min(), logp.max()
    if hi == lo:
        pixels = np.zeros_like(logp)
    else:
        pixels = (logp - lo) * (255.0 / (hi - lo))
    return Lofargram(pixels=pixels, source_id=source_id)


def track_to_line_map(track: FrequencyTrack, cfg: SpectralConfig) -> LineMap:
    """One pixel per row at the nearest bin round(f * n_fft), ties to even."""
    bins = np.rint(track.freqs * cfg.n_fft).astype(int)
    bins = np.clip(bins, 0, cfg.k_bins - 1)
    mask = np.zeros((len(bins), cfg.k_bins), dtype=np.uint8)
    mask[np.arange(len(bins)), bins] = 1
    return LineMap(mask=mask)
