"""Bit-exact persistence: tensor files, dataset directories, checkpoints,
and grayscale PGM export.

Tensor file layout (little-endian):
  16-byte header: magic b"LFGT", u16 version, u16 rank, 8 reserved bytes
  rank * u32 dimension sizes
  row-major float64 payload
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .adam import AdamState
from .errors import DataFormatError
from .network import (Conv, Dropout, Flatten, FullyConnected, LayerParams,
                      MaxPool, NetworkConfig, Parameters, ReLU, shape_chain)
from .spectral import Lofargram, LineMap, SpectralConfig, power_to_lofargram, stft_power, track_to_line_map
from .synthesis import SynthesisSpec, generate_dataset
from .trainer import TrainSample

MAGIC = b"LFGT"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# tensor files


def write_tensor(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f8")
    header = MAGIC + struct.pack("<HH", FORMAT_VERSION, array.ndim) + b"\x00" * 8
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + dims + array.tobytes())


def read_tensor(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise DataFormatError(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, rank = struct.unpack("<HH", blob[4:8])
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    dims_end = 16 + 4 * rank
    if len(blob) < dims_end:
        raise DataFormatError(f"{path}: truncated dimension list")
    dims = struct.unpack(f"<{rank}I", blob[16:dims_end])
    expected = dims_end + 8 * int(np.prod(dims))
    if len(blob) != expected:
        raise DataFormatError(f"{path}: length {len(blob)} != expected {expected}")
    data = np.frombuffer(blob[dims_end:], dtype="<f8").reshape(dims)
    return data.astype(np.float64)


# ---------------------------------------------------------------------------
# PGM export


def export_image(values: np.ndarray, path) -> None:
    """8-bit binary PGM (P5), rounding half-up, clipped to [0, 255]."""
    arr = np.floor(np.clip(np.asarray(values, dtype=float), 0.0, 255.0) + 0.5)
    arr = np.clip(arr, 0, 255).astype(np.uint8)
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


# ---------------------------------------------------------------------------
# dataset directories


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_dataset(out_dir, spec: SynthesisSpec, spectral: SpectralConfig) -> dict:
    """Synthesize, transform, and persist a dataset; returns the manifest."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    instances, train_idx, test_idx = generate_dataset(
        spec, spectral.n_samples(spec.t_slots), spectral.hop)
    records = []
    for i, inst in enumerate(instances):
        sample_id = f"{i:05d}"
        lofar = power_to_lofargram(stft_power(inst.samples, spectral), source_id=sample_id)
        lofar_file = f"data/{sample_id}_lofar.lfgt"
        write_tensor(out / lofar_file, lofar.pixels)
        rec = {
            "id": sample_id,
            "label": inst.label,
            "seed": inst.seed,
            "snr_db": spec.snr_db if inst.label == 1 else None,
            "lofargram": lofar_file,
            "line_map": None,
        }
        if inst.label == 1:
            mask = track_to_line_map(inst.track, spectral)
            mask_file = f"data/{sample_id}_mask.lfgt"
            write_tensor(out / mask_file, mask.mask.astype(float))
            rec["line_map"] = mask_file
        records.append(rec)
    manifest = {
        "format_version": FORMAT_VERSION,
        "synthesis": asdict(spec),
        "spectral": asdict(spectral),
        "samples": records,
        "split": {"train": train_idx, "test": test_idx},
    }
    _json_dump(manifest, out / "manifest.json")
    return manifest


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise DataFormatError(f"missing manifest: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError("unsupported manifest format_version")
    ids = [r["id"] for r in manifest["samples"]]
    if len(set(ids)) != len(ids):
        raise DataFormatError("duplicate sample ids in manifest")
    return manifest


def load_samples(dataset_dir, split: str = "all") -> list:
    """Load TrainSamples for "train", "test" or "all"."""
    root = Path(dataset_dir)
    manifest = read_manifest(root)
    if split == "all":
        wanted = range(len(manifest["samples"]))
    else:
        wanted = manifest["split"][split]
    samples = []
    for i in wanted:
        rec = manifest["samples"][i]
        pixels = read_tensor(root / rec["lofargram"])
        mask = None
        if rec["line_map"] is not None:
            mask = read_tensor(root / rec["line_map"]).astype(np.uint8)
        samples.append(TrainSample(sample_id=rec["id"], pixels=pixels, label=rec["label"],
                                   mask=mask, snr_db=rec["snr_db"]))
    return samples


# ---------------------------------------------------------------------------
# network config serialization


_LAYER_TAGS = {Conv: "conv", ReLU: "relu", MaxPool: "maxpool", Flatten: "flatten",
               FullyConnected: "fc", Dropout: "dropout"}


def net_config_to_dict(cfg: NetworkConfig) -> dict:
    layers = []
    for layer in cfg.layers:
        d = asdict(layer)
        d["type"] = _LAYER_TAGS[type(layer)]
        layers.append(d)
    return {"input_shape": list(cfg.input_shape), "layers": layers}


def net_config_from_dict(d: dict) -> NetworkConfig:
    ctors = {"conv": Conv, "relu": ReLU, "maxpool": MaxPool, "flatten": Flatten,
             "fc": FullyConnected, "dropout": Dropout}
    layers = []
    for entry in d["layers"]:
        entry = dict(entry)
        kind = entry.pop("type")
        layers.append(ctors[kind](**entry))
    return NetworkConfig(layers=tuple(layers), input_shape=tuple(d["input_shape"]))


# ---------------------------------------------------------------------------
# checkpoints


def write_checkpoint(out_dir, net_cfg: NetworkConfig, params: Parameters,
                     adam_state: AdamState, cursor: tuple, seed: int) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "network": net_config_to_dict(net_cfg),
        "cursor": {"stage": cursor[0], "iteration": cursor[1]},
        "adam_t": adam_state.t,
        "seed": seed,
    }
    _json_dump(meta, out / "meta.json")
    for group, plist in (("params", params), ("adam_m", adam_state.m), ("adam_v", adam_state.v)):
        for i, p in enumerate(plist):
            if p is None:
                continue
            write_tensor(out / f"{group}_{i:02d}_weight.lfgt", p.weight)
            write_tensor(out / f"{group}_{i:02d}_bias.lfgt", p.bias)


def read_checkpoint(ckpt_dir) -> tuple:
    """Returns (net_cfg, params, AdamState, cursor, seed)."""
    root = Path(ckpt_dir)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise DataFormatError(f"missing checkpoint meta: {meta_path}")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataFormatError("unsupported checkpoint format_version")
    net_cfg = net_config_from_dict(meta["network"])
    shapes = shape_chain(net_cfg)

    def load_group(group):
        plist = []
        for i, layer in enumerate(net_cfg.layers):
            if isinstance(layer, (Conv, FullyConnected)):
                w = read_tensor(root / f"{group}_{i:02d}_weight.lfgt")
                b = read_tensor(root / f"{group}_{i:02d}_bias.lfgt")
                plist.append(LayerParams(weight=w, bias=b))
            else:
                plist.append(None)
        return plist

    params = load_group("params")
    state = AdamState(m=load_group("adam_m"), v=load_group("adam_v"), t=int(meta["adam_t"]))
    cursor = (int(meta["cursor"]["stage"]), int(meta["cursor"]["iteration"]))
    # Sanity: parameter shapes must match the declared architecture.
    for i, layer in enumerate(net_cfg.layers):
        if isinstance(layer, Conv):
            expect = (layer.out_channels, shapes[i][0], layer.kernel_h, layer.kernel_w)
            if params[i].weight.shape != expect:
                raise DataFormatError(f"layer {i} weight shape mismatch")
        elif isinstance(layer, FullyConnected):
            if params[i].weight.shape != (shapes[i][0], layer.out_dim):
                raise DataFormatError(f"layer {i} weight shape mismatch")
    return net_cfg, params, state, cursor, int(meta["seed"])
