"""Acceptance gate: one test per release criterion, each printing a
single PASS/FAIL line on the terminal (bypassing capture).

The desk-scale learning criteria train real networks and dominate the
runtime of the suite (roughly ten minutes in total)."""

import json
import math
import statistics
import time

import numpy as np
import pytest

from lofarline import storage
from lofarline.cli import cli
from lofarline.gradcheck import (detection_loss_and_grad, detection_loss_fn,
                                 finite_difference_check, input_gradient_fd,
                                 joint_loss_and_grad, joint_loss_fn,
                                 random_small_net)
from lofarline.hmm import HmmConfig, brute_force_line, viterbi_line
from lofarline.losses import detection_loss, multitask_loss, recovery_loss
from lofarline.metrics import auc, lla, random_line_mask, roc_points
from lofarline.network import ReLU, network_forward, preset
from lofarline.presets import train_preset
from lofarline.saliency import MODES, back_pass, input_gradient
from lofarline.trainer import (REFLECTION_PRESETS, AugmentConfig, augment,
                               evaluate, train)

DESK_SEED = 42           # dataset master seed for the learning criteria
TRAIN_SEEDS = (0, 1, 2)  # 3-run median
_TRAINED = {}            # (snr_db, train_seed) -> dict of results


def announce(capsys, ok, text):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {text}")


def trained_run(dataset_dir_factory, snr_db, seed):
    key = (snr_db, seed)
    if key not in _TRAINED:
        ds = dataset_dir_factory(snr_db, 200, 200, DESK_SEED)
        train_set = storage.load_samples(ds, "train")
        test_set = storage.load_samples(ds, "test")
        cfg = train_preset("desk", snr_db, seed)
        t0 = time.perf_counter()
        params, _, _ = train(train_set, cfg, preset("alex-mini"))
        elapsed = time.perf_counter() - t0
        auc_val, mean_lla = evaluate(preset("alex-mini"), params, test_set)
        rng = np.random.default_rng([seed, 1234])
        rand_lla = float(np.mean([lla(random_line_mask(s.mask.shape, rng), s.mask)
                                  for s in test_set if s.label == 1]))
        _TRAINED[key] = {"auc": auc_val, "mean_lla": mean_lla,
                         "random_lla": rand_lla, "seconds": elapsed}
    return _TRAINED[key]


# -- criterion 1 ------------------------------------------------------------


def test_criterion_1_gradient_oracle_suite(capsys):
    t0 = time.perf_counter()
    worst_det = 0.0
    for seed in range(20):
        cfg, params, x = random_small_net(seed)
        rep = finite_difference_check(cfg, params, x, detection_loss_and_grad,
                                      detection_loss_fn, tol=1e-6)
        worst_det = max(worst_det, rep.max_rel_error)
    worst_joint = 0.0
    for seed in range(20, 30):
        cfg, params, x = random_small_net(seed)
        mask = random_line_mask(x.shape, np.random.default_rng(seed))
        rep = finite_difference_check(
            cfg, params, x,
            lambda c, p, xx: joint_loss_and_grad(c, p, xx, mask),
            lambda c, p, xx: joint_loss_fn(c, p, xx, mask), tol=1e-4)
        worst_joint = max(worst_joint, rep.max_rel_error)
    worst_linear = 0.0
    for seed in range(30, 35):
        cfg, params, x = random_small_net(seed, with_relu=False)
        mask = random_line_mask(x.shape, np.random.default_rng(seed))
        rep = finite_difference_check(
            cfg, params, x,
            lambda c, p, xx: joint_loss_and_grad(c, p, xx, mask),
            lambda c, p, xx: joint_loss_fn(c, p, xx, mask), tol=1e-5)
        worst_linear = max(worst_linear, rep.max_rel_error)
    elapsed = time.perf_counter() - t0
    ok = worst_det < 1e-6 and worst_joint < 1e-4 and worst_linear < 1e-5 and elapsed < 120
    announce(capsys, ok,
             f"criterion 1: gradient oracles (det {worst_det:.2e}, joint {worst_joint:.2e}, "
             f"relu-free {worst_linear:.2e}, {elapsed:.0f}s)")
    assert ok


# -- criterion 2 ------------------------------------------------------------


def test_criterion_2_saliency_correctness(capsys):
    worst = 0.0
    for seed in range(5):
        cfg, params, x = random_small_net(seed)
        trace = network_forward(cfg, params, x)
        analytic = input_gradient(cfg, params, trace, "bp")
        fd = input_gradient_fd(cfg, params, x)
        if fd.ndim == 3:
            fd = fd[0]
        keep = np.isfinite(fd)   # NaN marks ReLU/pool kink coordinates
        denom = np.maximum.reduce([np.abs(analytic), np.abs(fd), np.full_like(fd, 1e-2)])
        worst = max(worst, float(np.max(np.abs(analytic - fd)[keep] / denom[keep])))
    bitwise = True
    for seed in range(5):
        cfg, params, x = random_small_net(100 + seed, with_relu=False)
        trace = network_forward(cfg, params, x)
        maps = [input_gradient(cfg, params, trace, m) for m in MODES]
        bitwise &= np.array_equal(maps[0], maps[1]) and np.array_equal(maps[0], maps[2])
    contained = True
    for seed in range(100):
        cfg, params, x = random_small_net(seed)
        trace = network_forward(cfg, params, x)
        _, bp_gates = back_pass(cfg, params, trace, "bp")
        _, guided_gates = back_pass(cfg, params, trace, "guided")
        for i, layer in enumerate(cfg.layers):
            if isinstance(layer, ReLU):
                contained &= bool(np.all(guided_gates[i] <= bp_gates[i]))
    ok = worst < 1e-6 and bitwise and contained
    announce(capsys, ok,
             f"criterion 2: saliency (bp-vs-FD {worst:.2e}, relu-free bitwise {bitwise}, "
             f"guided-in-bp containment {contained})")
    assert ok


# -- criterion 3 ------------------------------------------------------------


def test_criterion_3_loss_oracles(capsys):
    e1 = abs(detection_loss((0.5, 0.5), 1) - math.log(2.0))
    loss, beta = recovery_loss(np.full((2, 2), 0.5), np.array([[1, 0], [0, 0]]))
    e2 = abs(loss - 1.5 * math.log(2.0))
    p = (0.3, 0.7)
    prob = np.random.default_rng(0).random((3, 3))
    mask = random_line_mask((3, 3), np.random.default_rng(0))
    out = multitask_loss(p, 1, prob, mask)
    exact = out.total == detection_loss(p, 1) + recovery_loss(prob, mask)[0]
    ok = e1 < 1e-9 and e2 < 1e-9 and beta == 0.75 and exact
    announce(capsys, ok,
             f"criterion 3: loss oracles (ln2 err {e1:.1e}, 1.5ln2 err {e2:.1e}, "
             f"decomposition exact {exact})")
    assert ok


# -- criteria 4 and 5 (desk-scale learning) ---------------------------------


def test_criterion_4_desk_scale_detection(capsys, dataset_dir_factory):
    medians = {}
    slowest = 0.0
    for snr in (-5.0, -10.0, -15.0):
        runs = [trained_run(dataset_dir_factory, snr, s) for s in TRAIN_SEEDS]
        medians[snr] = statistics.median(r["auc"] for r in runs)
        slowest = max(slowest, max(r["seconds"] for r in runs))
    monotone = medians[-5.0] >= medians[-10.0] >= medians[-15.0]
    ok = medians[-10.0] >= 0.95 and monotone and slowest < 900
    announce(capsys, ok,
             "criterion 4: desk AUC medians "
             f"{{-5: {medians[-5.0]:.3f}, -10: {medians[-10.0]:.3f}, "
             f"-15: {medians[-15.0]:.3f}}}, nonincreasing {monotone}, "
             f"slowest run {slowest:.0f}s")
    assert ok


def test_criterion_5_recovery_beats_random(capsys, dataset_dir_factory):
    ratios = []
    for s in TRAIN_SEEDS:
        run = trained_run(dataset_dir_factory, -10.0, s)
        ratios.append(run["mean_lla"] / run["random_lla"])
    ratio = statistics.median(ratios)
    ok = ratio >= 3.0
    announce(capsys, ok,
             f"criterion 5: saliency LLA vs random baseline at -10 dB, "
             f"median ratio {ratio:.1f}x (need >= 3x)")
    assert ok


# -- criterion 6 ------------------------------------------------------------


def test_criterion_6_hmm_baseline(capsys, dataset_dir_factory):
    rng = np.random.default_rng(123)
    exact = True
    for i in range(1000):
        t = int(rng.integers(1, 6))
        k = int(rng.integers(1, 5))
        pixels = np.round(rng.random((t, k)) * 255)
        cfg = HmmConfig(transition_std=float(rng.uniform(0.3, 3.0)),
                        emission=("power-weighted", "gaussian-likelihood")[i % 2])
        exact &= bool(np.array_equal(viterbi_line(pixels, cfg).mask,
                                     brute_force_line(pixels, cfg).mask))
    ds = dataset_dir_factory(0.0, 0, 100, 7)
    samples = storage.load_samples(ds, "all")
    cfg = HmmConfig(transition_std=1.2)   # the CLI default at desk scale
    llas = [lla(viterbi_line(s.pixels, cfg).mask, s.mask) for s in samples]
    mean_lla = float(np.mean(llas))
    ok = exact and mean_lla >= 0.9
    announce(capsys, ok,
             f"criterion 6: HMM (1000-instance brute-force agreement {exact}, "
             f"0 dB mean LLA {mean_lla:.3f})")
    assert ok


# -- criterion 7 ------------------------------------------------------------


def test_criterion_7_metric_unit_suite(capsys):
    m = random_line_mask((8, 8), np.random.default_rng(0))
    lla_cases = lla(m, m) == 1.0
    pred = np.zeros((3, 3)); pred[1, 1] = 1
    truth = np.zeros((3, 3)); truth[1, 2] = 1
    lla_cases &= lla(pred, truth) == 0.5
    lla_cases &= lla(np.zeros((3, 3)), truth) == 0.0
    rng = np.random.default_rng(1)
    roc_ok = True
    for _ in range(200):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.standard_normal(n), 2)
        got = {(p.far, p.pd) for p in roc_points(scores, labels)}
        want = set()
        for thr in [float("inf")] + sorted(set(scores.tolist())) + [float("-inf")]:
            declared = scores >= thr
            want.add(((declared & (labels == 0)).sum() / (labels == 0).sum(),
                      (declared & (labels == 1)).sum() / (labels == 1).sum()))
        roc_ok &= got == want
    n = 10_000
    labels = rng.integers(0, 2, n)
    a = auc(roc_points(rng.standard_normal(n), labels))
    auc_ok = abs(a - 0.5) <= 0.03
    ok = lla_cases and roc_ok and auc_ok
    announce(capsys, ok,
             f"criterion 7: metrics (LLA cases {lla_cases}, ROC brute force {roc_ok}, "
             f"null AUC {a:.3f})")
    assert ok


# -- criterion 8 ------------------------------------------------------------


def test_criterion_8_augmentation_counting(capsys):
    img = np.random.default_rng(0).random((8, 8))
    n4 = len(augment(img, None, AugmentConfig(reflections=REFLECTION_PRESETS["x4"],
                                              n_crops=4), 0))
    n8 = len(augment(img, None, AugmentConfig(reflections=REFLECTION_PRESETS["x8"],
                                              n_crops=4), 0))
    ok = (n4, n8) == (16, 32)
    announce(capsys, ok, f"criterion 8: augmentation multiplicities {n4}/{n8} (want 16/32)")
    assert ok


# -- criterion 9 ------------------------------------------------------------


def test_criterion_9_determinism_and_persistence(capsys, tmp_path):
    def pipeline(root):
        ds = root / "ds"
        assert cli(["synth", "--out", str(ds), "--seed", "6", "--snr-db", "-5",
                    "--n-h0", "10", "--n-h1", "10"]) == 0
        assert cli(["train", "--dataset", str(ds), "--out", str(root / "t"),
                    "--iterations", "6", "--seed", "1"]) == 0
        assert cli(["detect", "--checkpoint", str(root / "t" / "checkpoint"),
                    "--dataset", str(ds), "--split", "all",
                    "--out", str(root / "d")]) == 0
        return (root / "d" / "scores.json").read_bytes()

    rerun_identical = pipeline(tmp_path / "a") == pipeline(tmp_path / "b")

    ds = tmp_path / "a" / "ds"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"stage2_snrs": []}}))
    for out, iters, resume in (("full", "6", None), ("half", "3", None),
                               ("res", "6", "half")):
        argv = ["train", "--dataset", str(ds), "--out", str(tmp_path / out),
                "--iterations", iters, "--seed", "2", "--config", str(cfg)]
        if resume:
            argv += ["--resume", str(tmp_path / resume / "checkpoint")]
        assert cli(argv) == 0
    _, pa, _, _, _ = storage.read_checkpoint(tmp_path / "full" / "checkpoint")
    _, pb, _, _, _ = storage.read_checkpoint(tmp_path / "res" / "checkpoint")
    resume_identical = all(
        x is None or (x.weight.tobytes() == y.weight.tobytes()
                      and x.bias.tobytes() == y.bias.tobytes())
        for x, y in zip(pa, pb))

    arr = np.random.default_rng(9).standard_normal((7, 5))
    storage.write_tensor(tmp_path / "t.lfgt", arr)
    roundtrip_identical = storage.read_tensor(tmp_path / "t.lfgt").tobytes() == arr.tobytes()

    ok = rerun_identical and resume_identical and roundtrip_identical
    announce(capsys, ok,
             f"criterion 9: determinism (rerun {rerun_identical}, "
             f"resume {resume_identical}, round-trip {roundtrip_identical})")
    assert ok
