"""Synthetic time-series generation: noise-only (H0) and random-walk
sinusoid in noise (H1) instances at an exact time-domain SNR.

The instantaneous frequency of an H1 instance evolves as a Gaussian
random walk per time slot, reflected at the configured band edges.
SNR is defined in the time domain as 10*log10(a^2 / (2*sigma^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

NOISE_STD = 1.0  # sigma is fixed; SNR is controlled purely through amplitude


@dataclass(frozen=True)
class SynthesisSpec:
    t_slots: int
    k_bins: int
    step_std: float          # random-walk step, cycles/sample
    f_min: float
    f_max: float
    snr_db: float
    n_h0: int
    n_h1: int
    master_seed: int

    def __post_init__(self):
        if self.t_slots < 1:
            raise ConfigError("t_slots must be >= 1")
        if self.k_bins < 1 or (self.k_bins & (self.k_bins - 1)) != 0:
            raise ConfigError("k_bins must be a positive power of two")
        if not (0.0 < self.f_min < self.f_max < 0.5):
            raise ConfigError("need 0 < f_min < f_max < 0.5")
        if self.step_std < 0:
            raise ConfigError("step_std must be >= 0")
        if self.n_h0 < 0 or self.n_h1 < 0:
            raise ConfigError("instance counts must be >= 0")


@dataclass(frozen=True)
class FrequencyTrack:
    freqs: np.ndarray        # (t_slots,), cycles/sample
    seed: int


@dataclass(frozen=True)
class SignalInstance:
    samples: np.ndarray
    label: int               # 0 = noise only, 1 = line present
    track: Optional[FrequencyTrack]
    amplitude: float
    noise_std: float
    seed: int


def snr_db(amplitude: float, noise_variance: float) -> float:
    """Time-domain SNR in dB; zero amplitude maps to -inf."""
    if noise_variance <= 0:
        raise ConfigError("noise_variance must be > 0")
    if amplitude == 0:
        return float("-inf")
    return 10.0 * math.log10(amplitude * amplitude / (2.0 * noise_variance))


def amplitude_for_snr(target_snr_db: float, noise_std: float) -> float:
    """Inverse of snr_db at fixed noise std; -inf maps back to zero amplitude."""
    if noise_std <= 0:
        raise ConfigError("noise_std must be > 0")
    if target_snr_db == float("-inf"):
        return 0.0
    return math.sqrt(2.0 * noise_std * noise_std * 10.0 ** (target_snr_db / 10.0))


def _reflect(f: float, lo: float, hi: float) -> float:
    span = hi - lo
    # Fold into [lo, lo + 2*span) then mirror the upper half.
    x = (f - lo) % (2.0 * span)
    if x > span:
        x = 2.0 * span - x
    return lo + x


def gen_frequency_track(spec: SynthesisSpec, seed: int) -> FrequencyTrack:
    rng = np.random.default_rng([int(seed), 0])
    freqs = np.empty(spec.t_slots)
    f = rng.uniform(spec.f_min, spec.f_max)
    freqs[0] = f
    for t in range(1, spec.t_slots):
        f = _reflect(f + rng.normal(0.0, spec.step_std), spec.f_min, spec.f_max)
        freqs[t] = f
    return FrequencyTrack(freqs=freqs, seed=int(seed))


def synthesize_instance(
    spec: SynthesisSpec,
    n_samples: int,
    samples_per_slot: int,
    track: Optional[FrequencyTrack],
    seed: int,
) -> SignalInstance:
    """Build one time series of n_samples; slot t spans samples
    [t*samples_per_slot, (t+1)*samples_per_slot) with the tail clamped
    to the last slot.  Noise and phase come from separate substreams so
    an amplitude-zero H1 instance equals the H0 instance of the same seed.
    """
    noise = np.random.default_rng([int(seed), 1]).normal(0.0, NOISE_STD, n_samples)
    if track is None:
        return SignalInstance(samples=noise, label=0, track=None, amplitude=0.0,
                              noise_std=NOISE_STD, seed=int(seed))
    amp = amplitude_for_snr(spec.snr_db, NOISE_STD)
    phase0 = np.random.default_rng([int(seed), 2]).uniform(0.0, 2.0 * math.pi)
    slot = np.minimum(np.arange(n_samples) // samples_per_slot, spec.t_slots - 1)
    # Phase-accumulating oscillator: continuous phase across slot boundaries.
    phase = phase0 + 2.0 * math.pi * np.concatenate(([0.0], np.cumsum(track.freqs[slot])[:-1]))
    samples = amp * np.sin(phase) + noise
    return SignalInstance(samples=samples, label=1, track=track, amplitude=amp,
                          noise_std=NOISE_STD, seed=int(seed))


def instance_seed(master_seed: int, index: int) -> int:
    return int(master_seed) ^ int(index)


def generate_dataset(
    spec: SynthesisSpec, n_samples: int, samples_per_slot: int
) -> tuple[list[SignalInstance], list[int], list[int]]:
    """All H0 instances followed by all H1 instances, each generated from
    its own derived seed (order-independent), plus a deterministic
    per-class 90/10 train/test split over global indices.
    """
    instances = []
    for i in range(spec.n_h0):
        instances.append(synthesize_instance(spec, n_samples, samples_per_slot, None,
                                             instance_seed(spec.master_seed, i)))
    for j in range(spec.n_h1):
        seed = instance_seed(spec.master_seed, spec.n_h0 + j)
        track = gen_frequency_track(spec, seed)
        instances.append(synthesize_instance(spec, n_samples, samples_per_slot, track, seed))
    train_idx, test_idx = split_indices(spec)
    return instances, train_idx, test_idx


def split_indices(spec: SynthesisSpec) -> tuple[list[int], list[int]]:
    """Deterministic 90/10 split, stratified per label."""
    rng = np.random.default_rng([int(spec.master_seed), 99])
    train: list[int] = []
    test: list[int] = []
    for start, count in ((0, spec.n_h0), (spec.n_h0, spec.n_h1)):
        perm = start + rng.permutation(count)
        n_train = int(round(0.9 * count))
        train.extend(int(i) for i in perm[:n_train])
        test.extend(int(i) for i in perm[n_train:])
    return sorted(train), sorted(test)


def empirical_snr_db(signal: Sequence[float], noise: Sequence[float]) -> float:
    s = np.asarray(signal)
    n = np.asarray(noise)
    return 10.0 * math.log10(float(np.mean(s * s)) / float(np.mean(n * n)))
