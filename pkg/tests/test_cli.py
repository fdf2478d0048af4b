import json

import numpy as np
import pytest

from lofarline.cli import cli


def run(argv):
    return cli(argv)


def synth(out, seed=0, snr=-5.0, n=4, extra=()):
    return run(["synth", "--out", str(out), "--seed", str(seed),
                "--snr-db", str(snr), "--n-h0", str(n), "--n-h1", str(n), *extra])


def test_no_command_is_usage_error(capsys):
    assert run([]) == 1


def test_unknown_flag_is_usage_error(capsys):
    assert run(["synth", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_command_is_usage_error():
    assert run(["transmogrify"]) == 1


def test_missing_out_is_usage_error(tmp_path):
    assert run(["synth"]) == 1


def test_missing_dataset_is_data_error(tmp_path):
    assert run(["baseline-hmm", "--dataset", str(tmp_path / "nope"),
                "--out", str(tmp_path / "o")]) == 2


def test_bad_config_keys_are_data_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synthesis": {"warp_factor": 9}}))
    assert synth(tmp_path / "ds", extra=["--config", str(cfg)]) == 2


def test_synth_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert synth(a, seed=3) == 0
    assert synth(b, seed=3) == 0
    files_a = sorted(p for p in a.rglob("*") if p.is_file())
    assert files_a
    for pa in files_a:
        assert pa.read_bytes() == (b / pa.relative_to(a)).read_bytes()


def test_gradcheck_passes(capsys):
    assert run(["gradcheck", "--seed", "1", "--nets", "2"]) == 0
    out = capsys.readouterr().out
    assert "overall max relative error" in out
    worst = float(out.strip().rsplit(" ", 1)[-1])
    assert worst < 1e-4


def test_full_pipeline_smoke(tmp_path):
    """synth -> train -> detect -> recover -> eval -> baseline-hmm, all
    desk scale with a tiny iteration budget."""
    ds = tmp_path / "ds"
    runs = tmp_path / "runs"
    assert synth(ds, seed=1, snr=-5.0, n=10) == 0
    assert run(["train", "--dataset", str(ds), "--out", str(runs / "t"),
                "--iterations", "6", "--seed", "0"]) == 0
    ckpt = runs / "t" / "checkpoint"
    assert (ckpt / "meta.json").exists()
    assert run(["detect", "--checkpoint", str(ckpt), "--dataset", str(ds),
                "--split", "all", "--out", str(runs / "d")]) == 0
    scores = json.loads((runs / "d" / "scores.json").read_text())
    assert len(scores["samples"]) == 20
    assert run(["recover", "--checkpoint", str(ckpt), "--dataset", str(ds),
                "--split", "all", "--mode", "guided", "--out", str(runs / "r")]) == 0
    pgms = list((runs / "r").glob("*_saliency.pgm"))
    assert len(pgms) == 20
    assert run(["eval", "--scores", str(runs / "d" / "scores.json"),
                "--dataset", str(ds), "--masks", str(runs / "r"),
                "--out", str(runs / "e")]) == 0
    report = json.loads((runs / "e" / "report.json").read_text())
    assert 0.0 <= report["auc"] <= 1.0
    assert report["mean_lla"] is not None
    assert run(["baseline-hmm", "--dataset", str(ds), "--split", "all",
                "--out", str(runs / "h")]) == 0
    hmm = json.loads((runs / "h" / "report.json").read_text())
    assert 0.0 <= hmm["mean_lla"] <= 1.0


def test_train_rerun_is_deterministic(tmp_path):
    ds = tmp_path / "ds"
    assert synth(ds, seed=2, n=6) == 0
    for name in ("r1", "r2"):
        assert run(["train", "--dataset", str(ds), "--out", str(tmp_path / name),
                    "--iterations", "4", "--seed", "5"]) == 0
    ck = "checkpoint/params_07_weight.lfgt"
    a = (tmp_path / "r1" / ck).read_bytes()
    assert a == (tmp_path / "r2" / ck).read_bytes()


def test_train_resume_matches_straight_run(tmp_path):
    """Train N iterations straight vs train, checkpoint, resume: the final
    parameters must agree bit for bit."""
    ds = tmp_path / "ds"
    assert synth(ds, seed=4, n=6) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"stage2_snrs": []}}))
    assert run(["train", "--dataset", str(ds), "--out", str(tmp_path / "full"),
                "--iterations", "6", "--seed", "3", "--config", str(cfg)]) == 0
    assert run(["train", "--dataset", str(ds), "--out", str(tmp_path / "half"),
                "--iterations", "3", "--seed", "3", "--config", str(cfg)]) == 0
    assert run(["train", "--dataset", str(ds), "--out", str(tmp_path / "resumed"),
                "--iterations", "6", "--seed", "3", "--config", str(cfg),
                "--resume", str(tmp_path / "half" / "checkpoint")]) == 0
    import lofarline.storage as storage
    _, pa, _, _, _ = storage.read_checkpoint(tmp_path / "full" / "checkpoint")
    _, pb, _, _, _ = storage.read_checkpoint(tmp_path / "resumed" / "checkpoint")
    for x, y in zip(pa, pb):
        if x is not None:
            assert x.weight.tobytes() == y.weight.tobytes()
            assert x.bias.tobytes() == y.bias.tobytes()
