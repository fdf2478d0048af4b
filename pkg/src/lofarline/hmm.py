"""HMM-Viterbi frequency-line tracker (reimplementation baseline).

Decodes the most probable one-bin-per-row path through a lofargram:
emission scores come from pixel power, transitions from a discretized
Gaussian over bin jumps renormalized per source bin.  Ties are broken
toward the lower bin index; the returned path is the lexicographically
smallest maximizer, which the brute-force oracle reproduces exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigError, MetricError
from .spectral import LineMap


@dataclass(frozen=True)
class HmmConfig:
    transition_std: float                  # bins per slot
    emission: str = "gaussian-likelihood"  # "gaussian-likelihood" | "power-weighted"

    def __post_init__(self):
        if self.transition_std <= 0:
            raise ConfigError("transition_std must be > 0")
        if self.emission not in ("power-weighted", "gaussian-likelihood"):
            raise ConfigError(f"unknown emission model {self.emission!r}")


def emission_logscore(pixels: np.ndarray, cfg: HmmConfig) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=float)
    if cfg.emission == "power-weighted":
        return pixels / 255.0
    # gaussian-likelihood: per-row standardized pixel value, i.e. the
    # line-present log-likelihood ratio under a Gaussian background model.
    mean = pixels.mean(axis=1, keepdims=True)
    std = pixels.std(axis=1, keepdims=True)
    std[std == 0] = 1.0
    return (pixels - mean) / std


def transition_logprob(k_bins: int, cfg: HmmConfig) -> np.ndarray:
    """log a(k, k'): discretized Gaussian over jumps, renormalized per row."""
    k = np.arange(k_bins)
    w = np.exp(-((k[None, :] - k[:, None]) ** 2) / (2.0 * cfg.transition_std ** 2))
    # Sum each row in sorted order so mirror-image rows normalize to
    # bit-identical values and symmetric ties stay exact ties.
    w /= np.sort(w, axis=1).sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):   # underflowed jumps are simply impossible
        return np.log(w)


def _path_mask(path, k_bins: int) -> LineMap:
    mask = np.zeros((len(path), k_bins), dtype=np.uint8)
    mask[np.arange(len(path)), path] = 1
    return LineMap(mask=mask)


def viterbi_line(lofargram_pixels: np.ndarray, cfg: HmmConfig) -> LineMap:
    pixels = np.asarray(lofargram_pixels, dtype=float)
    t_slots, k_bins = pixels.shape
    if t_slots < 1 or k_bins < 1:
        raise MetricError("empty lofargram")
    loge = emission_logscore(pixels, cfg)
    loga = transition_logprob(k_bins, cfg)
    # Suffix DP: delta[t, k] = best score of the path suffix starting at (t, k).
    delta = np.empty((t_slots, k_bins))
    delta[-1] = loge[-1]
    for t in range(t_slots - 2, -1, -1):
        # Sum association matches the brute-force oracle: loge + (loga + delta).
        delta[t] = loge[t] + np.max(loga + delta[t + 1][None, :], axis=1)
    # Forward reconstruction with lowest-index argmax at each step gives
    # the lexicographically smallest optimal path.
    path = [int(np.argmax(delta[0]))]
    for t in range(t_slots - 1):
        path.append(int(np.argmax(loga[path[-1]] + delta[t + 1])))
    return _path_mask(path, k_bins)


def brute_force_line(lofargram_pixels: np.ndarray, cfg: HmmConfig) -> LineMap:
    """Exact maximizer by full path enumeration; test oracle only."""
    pixels = np.asarray(lofargram_pixels, dtype=float)
    t_slots, k_bins = pixels.shape
    if k_bins ** t_slots > 10 ** 6:
        raise MetricError("instance too large for brute-force enumeration")
    loge = emission_logscore(pixels, cfg)
    loga = transition_logprob(k_bins, cfg)
    best_score = -np.inf
    best_path = None
    for path in product(range(k_bins), repeat=t_slots):
        # Right-to-left accumulation mirrors the DP recurrence bit for bit.
        score = loge[t_slots - 1, path[-1]]
        for t in range(t_slots - 2, -1, -1):
            score = loge[t, path[t]] + (loga[path[t], path[t + 1]] + score)
        if score > best_score:
            best_score = score
            best_path = path
    return _path_mask(list(best_path), k_bins)
