"""Data augmentation, SNR curriculum, and the mini-batch training loop.

Training is a pure function of (dataset, configs, seed): every random
stream (epoch shuffles, crops, dropout) is derived statelessly from the
seed plus its position, so runs are bit-reproducible and checkpoints can
resume mid-stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .adam import AdamState, adam_step
from .errors import ConfigError, NumericError
from .losses import loss_param_gradient
from .metrics import auc as roc_auc
from .metrics import lla, roc_points
from .network import (Dropout, NetworkConfig, Parameters, add_params,
                      copy_params, init_parameters, network_forward,
                      zero_like_params)
from .saliency import input_gradient

REFLECTIONS = ("id", "h", "v", "hv", "t", "th", "tv", "thv")
REFLECTION_PRESETS = {
    "x4": ("id", "h", "v", "hv"),
    # The x8 preset adds the four transposed variants (square crops only).
    "x8": REFLECTIONS,
}


@dataclass(frozen=True)
class AugmentConfig:
    reflections: tuple = REFLECTION_PRESETS["x4"]
    n_crops: int = 1
    crop_h: Optional[int] = None     # None = full size
    crop_w: Optional[int] = None


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_stage1: float = 1e-3
    lr_stage2: float = 1e-4
    weight_decay: float = 1e-3
    dropout: float = 0.5
    max_iterations: int = 100_000
    stage2_max_iterations: Optional[int] = None   # None = same as stage 1
    eval_every: int = 0              # 0 = no periodic evaluation
    seed: int = 0
    augmentation: AugmentConfig = AugmentConfig()
    stage1_snrs: tuple = (-20.0, -23.0)
    stage2_snrs: tuple = (-24.0, -25.0, -26.0)
    saliency_mode: str = "bp"
    lla_threshold: float = 0.5       # on the sigmoid probability map

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class Stage:
    snrs: tuple
    lr: float
    max_iterations: int


@dataclass(frozen=True)
class TrainSample:
    sample_id: str
    pixels: np.ndarray               # (T, K) lofargram
    label: int
    mask: Optional[np.ndarray]       # (T, K) line map, label 1 only
    snr_db: Optional[float] = None


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)   # (stage, iter, l_det, l_rec, total)
    evals: list = field(default_factory=list)    # (stage, iter, auc, mean_lla)
    final_checkpoint_id: str = ""
    wall_clock: float = 0.0


# ---------------------------------------------------------------------------
# augmentation


def _reflect(img: np.ndarray, name: str) -> np.ndarray:
    if name not in REFLECTIONS:
        raise ConfigError(f"unknown reflection {name!r}")
    out = img
    if "t" in name:
        out = out.T
    if "h" in name:
        out = out[:, ::-1]
    if "v" in name:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def augment(pixels: np.ndarray, mask: Optional[np.ndarray], aug: AugmentConfig, seed: int) -> list:
    """All configured reflections, each followed by n_crops random aligned
    crops; output count is |reflections| * n_crops."""
    pairs = []
    for r_idx, name in enumerate(aug.reflections):
        img = _reflect(pixels, name)
        msk = _reflect(mask, name) if mask is not None else None
        ch = aug.crop_h or img.shape[0]
        cw = aug.crop_w or img.shape[1]
        if ch > img.shape[0] or cw > img.shape[1]:
            raise ConfigError("crop larger than (reflected) image")
        for c_idx in range(aug.n_crops):
            rng = np.random.default_rng([int(seed), 31, r_idx, c_idx])
            top = int(rng.integers(0, img.shape[0] - ch + 1))
            left = int(rng.integers(0, img.shape[1] - cw + 1))
            crop_img = img[top : top + ch, left : left + cw].copy()
            crop_msk = msk[top : top + ch, left : left + cw].copy() if msk is not None else None
            pairs.append((crop_img, crop_msk))
    return pairs


def expand_dataset(dataset, aug: AugmentConfig, seed: int) -> list:
    """Apply the augmentation to every sample; identity config is a no-op."""
    if aug.reflections == ("id",) and aug.n_crops == 1 and aug.crop_h is None \
            and aug.crop_w is None:
        return list(dataset)
    out = []
    for idx, s in enumerate(dataset):
        aug_seed = int(np.random.SeedSequence([int(seed), 41, idx]).generate_state(1)[0])
        for j, (img, msk) in enumerate(augment(s.pixels, s.mask, aug, aug_seed)):
            out.append(TrainSample(sample_id=f"{s.sample_id}a{j:02d}", pixels=img,
                                   label=s.label, mask=msk, snr_db=s.snr_db))
    return out


# ---------------------------------------------------------------------------
# curriculum and batching


def make_curriculum(cfg: TrainConfig) -> list:
    stages = []
    if cfg.stage1_snrs:
        stages.append(Stage(snrs=tuple(cfg.stage1_snrs), lr=cfg.lr_stage1,
                            max_iterations=cfg.max_iterations))
    if cfg.stage2_snrs:
        iters2 = cfg.stage2_max_iterations
        if iters2 is None:
            iters2 = cfg.max_iterations
        stages.append(Stage(snrs=tuple(cfg.stage2_snrs), lr=cfg.lr_stage2,
                            max_iterations=iters2))
    if not stages:
        raise ConfigError("curriculum needs at least one non-empty stage")
    return stages


def _epoch_perm(seed: int, stage_idx: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([int(seed), 17, stage_idx, epoch]).permutation(n)


def batch_indices(seed: int, stage_idx: int, iteration: int, batch: int, n: int) -> list:
    """Deterministic epoch-shuffled batch for a 1-based iteration number."""
    out = []
    perm_cache = {}
    for pos in range((iteration - 1) * batch, iteration * batch):
        epoch, off = divmod(pos, n)
        if epoch not in perm_cache:
            perm_cache[epoch] = _epoch_perm(seed, stage_idx, epoch, n)
        out.append(int(perm_cache[epoch][off]))
    return out


def apply_dropout_rate(net_cfg: NetworkConfig, rate: float) -> NetworkConfig:
    layers = tuple(Dropout(rate) if isinstance(l, Dropout) else l for l in net_cfg.layers)
    return replace(net_cfg, layers=layers)


# ---------------------------------------------------------------------------
# evaluation helpers


def detection_scores(net_cfg: NetworkConfig, params: Parameters, samples) -> list:
    return [float(network_forward(net_cfg, params, s.pixels).scores[1]) for s in samples]


def saliency_mask(net_cfg: NetworkConfig, params: Parameters, pixels, mode: str = "bp",
                  threshold: float = 0.5) -> np.ndarray:
    trace = network_forward(net_cfg, params, pixels)
    raw = input_gradient(net_cfg, params, trace, mode)
    # prob > threshold; at the default 0.5 this is raw > 0.
    return (raw > np.log(threshold / (1.0 - threshold))).astype(np.uint8)


def evaluate(net_cfg: NetworkConfig, params: Parameters, samples, mode: str = "bp",
             threshold: float = 0.5) -> tuple:
    """(AUC or None, mean LLA over line-present samples or None)."""
    scores = detection_scores(net_cfg, params, samples)
    labels = [s.label for s in samples]
    auc_val = None
    if 0 in labels and 1 in labels:
        auc_val = roc_auc(roc_points(scores, labels))
    llas = [lla(saliency_mask(net_cfg, params, s.pixels, mode, threshold), s.mask)
            for s in samples if s.label == 1]
    mean_lla = float(np.mean(llas)) if llas else None
    return auc_val, mean_lla


# ---------------------------------------------------------------------------
# training loop


def _stage_samples(dataset, stage: Stage) -> list:
    if not stage.snrs:
        return list(dataset)
    return [s for s in dataset if s.label == 0 or s.snr_db is None or s.snr_db in stage.snrs]


def train(
    dataset_train,
    cfg: TrainConfig,
    net_cfg: NetworkConfig,
    eval_set=None,
    init_params: Optional[Parameters] = None,
    adam_state: Optional[AdamState] = None,
    start_cursor: tuple = (0, 0),
) -> tuple:
    """Run the curriculum; returns (params, AdamState, TrainReport).

    start_cursor = (stage_index, iterations_already_done_in_that_stage)
    enables bit-exact resume from a checkpoint.
    """
    if not dataset_train:
        raise ConfigError("empty training dataset")
    labels = {s.label for s in dataset_train}
    if labels != {0, 1}:
        raise ConfigError("training dataset must contain both labels")
    net_cfg = apply_dropout_rate(net_cfg, cfg.dropout)
    dataset_train = expand_dataset(dataset_train, cfg.augmentation, cfg.seed)
    if eval_set:
        want = tuple(net_cfg.input_shape[1:])
        eval_set = [s for s in eval_set if s.pixels.shape == want]
    params = copy_params(init_params) if init_params is not None \
        else init_parameters(net_cfg, cfg.seed)
    state = adam_state if adam_state is not None else AdamState.init(params)
    stages = make_curriculum(cfg)
    report = TrainReport()
    t0 = time.perf_counter()
    for stage_idx, stage in enumerate(stages):
        if stage_idx < start_cursor[0]:
            continue
        samples = _stage_samples(dataset_train, stage)
        if not samples:
            continue
        n = len(samples)
        first_it = start_cursor[1] + 1 if stage_idx == start_cursor[0] else 1
        for it in range(first_it, stage.max_iterations + 1):
            batch = batch_indices(cfg.seed, stage_idx, it, cfg.batch_size, n)
            grads_sum = zero_like_params(params)
            det_sum = rec_sum = tot_sum = 0.0
            try:
                for j, idx in enumerate(batch):
                    s = samples[idx]
                    rng = np.random.default_rng([int(cfg.seed), 23, stage_idx, it, j])
                    trace = network_forward(net_cfg, params, s.pixels,
                                            train_mode=True, rng=rng)
                    breakdown, grads = loss_param_gradient(
                        net_cfg, params, s.pixels, s.label, s.mask,
                        mode=cfg.saliency_mode, trace=trace)
                    add_params(grads_sum, grads)
                    det_sum += breakdown.l_det
                    rec_sum += breakdown.l_rec
                    tot_sum += breakdown.total
            except NumericError as exc:
                exc.state = (params, state, (stage_idx, it - 1))  # last finite state
                raise
            inv = 1.0 / len(batch)
            for g in grads_sum:
                if g is not None:
                    g.weight *= inv
                    g.bias *= inv
            adam_step(params, grads_sum, state, stage.lr, cfg.weight_decay)
            report.losses.append((stage_idx, it, det_sum * inv, rec_sum * inv, tot_sum * inv))
            if cfg.eval_every and eval_set and it % cfg.eval_every == 0:
                auc_val, mean_lla = evaluate(net_cfg, params, eval_set,
                                             cfg.saliency_mode, cfg.lla_threshold)
                report.evals.append((stage_idx, it, auc_val, mean_lla))
    report.wall_clock = time.perf_counter() - t0
    return params, state, report
