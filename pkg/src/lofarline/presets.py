"""Named experiment presets.

"desk" is the small 64x64 configuration used by the test suite; "paper"
is the full-size 500x256 configuration (224x224 crops, large network)
that is constructible but far too heavy for CI.
"""

from __future__ import annotations

from .errors import ConfigError
from .spectral import SpectralConfig
from .synthesis import SynthesisSpec
from .trainer import AugmentConfig, TrainConfig


def spectral_preset(name: str) -> SpectralConfig:
    if name == "desk":
        return SpectralConfig(window_len=128, hop=128, n_fft=128, window="hann")
    if name == "paper":
        return SpectralConfig(window_len=512, hop=512, n_fft=512, window="hann")
    raise ConfigError(f"unknown preset {name!r}")


def synthesis_preset(name: str, snr_db: float, n_h0: int, n_h1: int,
                     master_seed: int) -> SynthesisSpec:
    if name == "desk":
        k_bins = 64
        t_slots = 64
    elif name == "paper":
        k_bins = 256
        t_slots = 500
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return SynthesisSpec(
        t_slots=t_slots, k_bins=k_bins,
        step_std=0.3 / k_bins,        # 0.3 bin-widths per slot
        f_min=0.05, f_max=0.45,
        snr_db=snr_db, n_h0=n_h0, n_h1=n_h1, master_seed=master_seed,
    )


def train_preset(name: str, snr_db: float, seed: int, max_iterations: int = 1500) -> TrainConfig:
    if name == "desk":
        # Single-SNR two-stage schedule: the lr drop to 1e-4 for the last
        # third of the budget settles the noisy small-batch AUC.
        return TrainConfig(
            batch_size=16,
            lr_stage1=1e-3, lr_stage2=1e-4,
            weight_decay=1e-3, dropout=0.5,
            max_iterations=max_iterations,
            stage2_max_iterations=max(1, max_iterations // 3),
            eval_every=0, seed=seed,
            augmentation=AugmentConfig(reflections=("id", "h", "v", "hv"), n_crops=1),
            stage1_snrs=(snr_db,), stage2_snrs=(snr_db,),
        )
    if name == "paper":
        return TrainConfig(
            batch_size=128,
            lr_stage1=1e-3, lr_stage2=1e-4,
            weight_decay=1e-3, dropout=0.5,
            max_iterations=100_000,
            eval_every=1000, seed=seed,
            augmentation=AugmentConfig(reflections=("id", "h", "v", "hv"),
                                       n_crops=4, crop_h=224, crop_w=224),
            stage1_snrs=(-20.0, -23.0), stage2_snrs=(-24.0, -25.0, -26.0),
        )
    raise ConfigError(f"unknown preset {name!r}")


def network_preset_name(name: str) -> str:
    return {"desk": "alex-mini", "paper": "alex-paper"}[name]
