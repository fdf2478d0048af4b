"""Command-line surface.

Subcommands: synth, train, detect, recover, eval, baseline-hmm, gradcheck.
Exit codes: 0 success, 1 usage error, 2 configuration/data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import storage
from .errors import ConfigError, DataFormatError, MetricError, NumericError
from .gradcheck import (detection_loss_and_grad, detection_loss_fn,
                        finite_difference_check, joint_loss_and_grad,
                        joint_loss_fn, random_small_net)
from .hmm import HmmConfig, viterbi_line
from .metrics import auc as roc_auc
from .metrics import lla, roc_points
from .network import network_forward, preset as network_preset
from .presets import (network_preset_name, spectral_preset, synthesis_preset,
                      train_preset)
from .saliency import MODES, compute_saliency
from .trainer import AugmentConfig, TrainConfig, make_curriculum, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lofarline", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=Path, default=None, help="JSON config overrides")
        p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("synth", help="synthesize a lofargram dataset")
    common(p)
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--snr-db", type=float, default=-10.0)
    p.add_argument("--n-h0", type=int, default=100)
    p.add_argument("--n-h1", type=int, default=100)

    p = sub.add_parser("train", help="train the detector+recovery network")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--preset", default="desk", choices=["desk", "paper"])
    p.add_argument("--net", default=None, help="network preset name")
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--resume", type=Path, default=None)

    p = sub.add_parser("detect", help="score lofargrams with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "all"])

    p = sub.add_parser("recover", help="saliency maps and line masks")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "all"])
    p.add_argument("--mode", default="bp", choices=list(MODES))
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("eval", help="ROC/AUC/LLA tables from scores and masks")
    common(p)
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--masks", type=Path, default=None)

    p = sub.add_parser("baseline-hmm", help="Viterbi line tracking baseline")
    common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--split", default="test", choices=["train", "test", "all"])
    p.add_argument("--transition-std", type=float, default=None, help="bins per slot")
    p.add_argument("--emission", default="gaussian-likelihood",
                   choices=["power-weighted", "gaussian-likelihood"])

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--nets", type=int, default=3)

    return parser


def _load_config(path):
    if path is None:
        return {}
    if not Path(path).exists():
        raise DataFormatError(f"config file not found: {path}")
    return json.loads(Path(path).read_text())


def _replace_from_dict(obj, overrides: dict):
    fields = {f.name for f in dataclasses.fields(obj)}
    unknown = set(overrides) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return dataclasses.replace(obj, **overrides)


def _require_out(args):
    if args.out is None:
        raise UsageError("--out is required for this command")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _json_out(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args):
    cfgj = _load_config(args.config)
    spec = synthesis_preset(args.preset, args.snr_db, args.n_h0, args.n_h1, args.seed)
    spec = _replace_from_dict(spec, cfgj.get("synthesis", {}))
    spectral = _replace_from_dict(spectral_preset(args.preset), cfgj.get("spectral", {}))
    out = _require_out(args)
    storage.write_dataset(out, spec, spectral)
    print(f"wrote dataset with {spec.n_h0}+{spec.n_h1} samples to {out}")
    return 0


def _train_config_from_args(args, manifest) -> TrainConfig:
    cfgj = _load_config(args.config)
    snr = manifest["synthesis"]["snr_db"]
    cfg = train_preset(args.preset, snr, args.seed, args.iterations)
    cfg = dataclasses.replace(cfg, eval_every=args.eval_every)
    overrides = dict(cfgj.get("train", {}))
    if "augmentation" in overrides:
        overrides["augmentation"] = AugmentConfig(**overrides["augmentation"])
    for key in ("stage1_snrs", "stage2_snrs"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    return _replace_from_dict(cfg, overrides)


def _cmd_train(args):
    out = _require_out(args)
    manifest = storage.read_manifest(args.dataset)
    train_set = storage.load_samples(args.dataset, "train")
    eval_set = storage.load_samples(args.dataset, "test")
    cfg = _train_config_from_args(args, manifest)
    t_slots = manifest["synthesis"]["t_slots"]
    k_bins = manifest["synthesis"]["k_bins"]
    init_params = None
    adam_state = None
    cursor = (0, 0)
    if args.resume is not None:
        net_cfg, init_params, adam_state, cursor, _ = storage.read_checkpoint(args.resume)
    else:
        net_name = args.net or network_preset_name(args.preset)
        aug = cfg.augmentation
        hw = (aug.crop_h, aug.crop_w) if aug.crop_h else (t_slots, k_bins)
        net_cfg = network_preset(net_name, hw)
    try:
        params, state, report = train(train_set, cfg, net_cfg, eval_set=eval_set,
                                      init_params=init_params, adam_state=adam_state,
                                      start_cursor=cursor)
    except NumericError as exc:
        if hasattr(exc, "state"):
            p, s, cur = exc.state
            storage.write_checkpoint(out / "checkpoint_last_finite", net_cfg, p, s,
                                     cur, cfg.seed)
            print(f"training aborted on non-finite loss; last finite state saved", file=sys.stderr)
        raise
    stages = make_curriculum(cfg)
    final_cursor = (len(stages) - 1, stages[-1].max_iterations)
    storage.write_checkpoint(out / "checkpoint", net_cfg, params, state, final_cursor, cfg.seed)
    _json_out(out / "report.json", {
        "losses": report.losses,
        "evals": report.evals,
        "wall_clock": report.wall_clock,
    })
    print(f"trained {len(report.losses)} iterations; checkpoint in {out / 'checkpoint'}")
    return 0


def _cmd_detect(args):
    out = _require_out(args)
    net_cfg, params, _, _, _ = storage.read_checkpoint(args.checkpoint)
    samples = storage.load_samples(args.dataset, args.split)
    records = [{"id": s.sample_id, "label": s.label,
                "score": float(network_forward(net_cfg, params, s.pixels).scores[1])}
               for s in samples]
    _json_out(out / "scores.json", {"split": args.split, "samples": records})
    print(f"scored {len(records)} lofargrams -> {out / 'scores.json'}")
    return 0


def _cmd_recover(args):
    out = _require_out(args)
    net_cfg, params, _, _, _ = storage.read_checkpoint(args.checkpoint)
    samples = storage.load_samples(args.dataset, args.split)
    thr_raw = float(np.log(args.threshold / (1.0 - args.threshold)))
    for s in samples:
        trace = network_forward(net_cfg, params, s.pixels)
        result = compute_saliency(net_cfg, params, trace, args.mode)
        storage.export_image(result.display * 255.0, out / f"{s.sample_id}_saliency.pgm")
        storage.write_tensor(out / f"{s.sample_id}_mask.lfgt",
                             (result.raw > thr_raw).astype(float))
    print(f"recovered {len(samples)} saliency maps ({args.mode}) -> {out}")
    return 0


def _cmd_eval(args):
    out = _require_out(args)
    scores_doc = json.loads(Path(args.scores).read_text())
    samples = {s.sample_id: s for s in storage.load_samples(args.dataset, "all")}
    scores = [r["score"] for r in scores_doc["samples"]]
    labels = [r["label"] for r in scores_doc["samples"]]
    points = roc_points(scores, labels)
    report = {
        "auc": roc_auc(points),
        "roc": [{"threshold": p.threshold, "pd": p.pd, "far": p.far} for p in points],
        "lla": {},
        "mean_lla": None,
    }
    if args.masks is not None:
        llas = {}
        for r in scores_doc["samples"]:
            truth = samples[r["id"]].mask
            mask_file = Path(args.masks) / f"{r['id']}_mask.lfgt"
            if truth is not None and mask_file.exists():
                pred = storage.read_tensor(mask_file)
                llas[r["id"]] = lla(pred, truth)
        report["lla"] = llas
        if llas:
            report["mean_lla"] = float(np.mean(list(llas.values())))
    _json_out(out / "report.json", report)
    print(f"AUC {report['auc']:.4f}" +
          (f", mean LLA {report['mean_lla']:.4f}" if report["mean_lla"] is not None else ""))
    return 0


def _cmd_baseline_hmm(args):
    out = _require_out(args)
    manifest = storage.read_manifest(args.dataset)
    samples = storage.load_samples(args.dataset, args.split)
    if args.transition_std is None:
        # Twice the synthesizer's true step size in bins: the slack absorbs
        # bin rounding and boundary reflections of the track.
        std = 2.0 * manifest["synthesis"]["step_std"] * manifest["spectral"]["n_fft"]
    else:
        std = args.transition_std
    cfg = HmmConfig(transition_std=std, emission=args.emission)
    llas = {}
    for s in samples:
        pred = viterbi_line(s.pixels, cfg)
        storage.write_tensor(out / f"{s.sample_id}_mask.lfgt", pred.mask.astype(float))
        if s.mask is not None:
            llas[s.sample_id] = lla(pred.mask, s.mask)
    report = {"method": "HMM-Viterbi (reimplementation)",
              "transition_std": std, "emission": args.emission,
              "lla": llas,
              "mean_lla": float(np.mean(list(llas.values()))) if llas else None}
    _json_out(out / "report.json", report)
    if report["mean_lla"] is not None:
        print(f"HMM-Viterbi mean LLA {report['mean_lla']:.4f}")
    return 0


def _cmd_gradcheck(args):
    worst = 0.0
    ok = True
    for i in range(args.nets):
        cfg, params, x = random_small_net(args.seed * 1000 + i)
        rep = finite_difference_check(cfg, params, x, detection_loss_and_grad,
                                      detection_loss_fn, tol=1e-6)
        print(f"detection net {i}: max rel err {rep.max_rel_error:.3e} "
              f"({rep.n_checked} coords, {rep.n_skipped_kinks} kinks skipped)")
        ok &= rep.passed
        worst = max(worst, rep.max_rel_error)
    rng = np.random.default_rng(args.seed)
    for i, with_relu in enumerate([False, True]):
        cfg, params, x = random_small_net(args.seed * 2000 + i, n_conv=1,
                                          with_relu=with_relu, with_pool=with_relu)
        t, k = x.shape
        mask = np.zeros((t, k))
        mask[np.arange(t), rng.integers(0, k, t)] = 1
        tol = 1e-5 if not with_relu else 1e-4
        rep = finite_difference_check(
            cfg, params, x,
            lambda c, p, xx: joint_loss_and_grad(c, p, xx, mask),
            lambda c, p, xx: joint_loss_fn(c, p, xx, mask), tol=tol)
        kind = "relu" if with_relu else "linear"
        print(f"joint loss ({kind}): max rel err {rep.max_rel_error:.3e} "
              f"({rep.n_checked} coords, {rep.n_skipped_kinks} kinks skipped)")
        ok &= rep.passed
        worst = max(worst, rep.max_rel_error)
    print(f"overall max relative error: {worst:.3e}")
    if not ok:
        raise NumericError("gradient check failed")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "recover": _cmd_recover,
    "eval": _cmd_eval,
    "baseline-hmm": _cmd_baseline_hmm,
    "gradcheck": _cmd_gradcheck,
}


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ConfigError, DataFormatError, MetricError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli())
