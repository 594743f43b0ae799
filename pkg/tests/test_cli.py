"""The ``dmsr`` command line front end."""

import json

import numpy as np
import pytest

from dmsr import cli, gradcheck
from dmsr import data as D
from dmsr.checkpoint import load_checkpoint
from conftest import make_phantom, tiny_train_config


def _write_config(tmp_path, **overrides):
    cfg = tiny_train_config(**overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def test_train_eval_infer_flow(data_dir, tmp_path, capsys):
    cfg = _write_config(tmp_path)
    run = tmp_path / "run"
    assert cli.main(["train", str(data_dir), "--config", str(cfg),
                     "--seed", "3", "--out", str(run)]) == 0
    out = capsys.readouterr().out
    assert "trained 4 steps on 3 pairs" in out
    ckpt = run / "checkpoint.ckpt"
    assert ckpt.exists()

    assert cli.main(["eval", str(ckpt), str(data_dir),
                     "--out", str(tmp_path / "eval")]) == 0
    table = capsys.readouterr().out
    assert "knee_a" in table and "mean" in table

    lr = D.degrade_kspace(make_phantom(32, 32, seed=4), 2)
    D.save_image(tmp_path / "scan.png", lr, 16)
    assert cli.main(["infer", str(ckpt), str(tmp_path / "scan.png"),
                     "--out", str(tmp_path / "sr"),
                     "--bit-depth", "8"]) == 0
    assert (tmp_path / "sr" / "scan_sr.png").exists()


def test_train_accepts_preset_name_and_scale_override(data_dir, tmp_path,
                                                      capsys):
    run = tmp_path / "run"
    code = cli.main(["train", str(data_dir), "--config", "desk",
                     "--scale", "4", "--out", str(run)])
    capsys.readouterr()
    assert code == 0
    ck = load_checkpoint(run / "checkpoint.ckpt")
    assert ck["config"]["train"]["model"]["scale"] == 4


def test_train_resume_flag(data_dir, tmp_path, capsys):
    short = _write_config(tmp_path, iterations=2)
    run = tmp_path / "run"
    assert cli.main(["train", str(data_dir), "--config", str(short),
                     "--out", str(run)]) == 0
    longer = tmp_path / "longer.json"
    longer.write_text(json.dumps(tiny_train_config(iterations=4).to_dict()))
    assert cli.main(["train", str(data_dir), "--config", str(longer),
                     "--out", str(run),
                     "--resume", str(run / "checkpoint.ckpt")]) == 0
    capsys.readouterr()
    lines = (run / "loss_log.jsonl").read_text().splitlines()
    assert [json.loads(l)["step"] for l in lines] == [0, 1, 2, 3]


def test_ablate_command(data_dir, tmp_path, capsys):
    cfg = _write_config(tmp_path, iterations=1)
    out = tmp_path / "abl"
    assert cli.main(["ablate", str(data_dir), "--config", str(cfg),
                     "--out", str(out)]) == 0
    table = capsys.readouterr().out
    for label in ("w/o Deform", "w/o MVC", "w/o CELoss", "Deform-Mamba"):
        assert label in table
    assert (out / "ablation.json").exists()


def test_bad_config_reports_and_exits_2(data_dir, tmp_path, capsys):
    run = str(tmp_path / "run")
    # neither a preset nor a file
    assert cli.main(["train", str(data_dir), "--config", "nope",
                     "--out", run]) == 2
    assert "error" in capsys.readouterr().err
    # malformed JSON
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["train", str(data_dir), "--config", str(bad),
                     "--out", run]) == 2
    # unknown key
    bad.write_text(json.dumps({"learning_rate": 1e-3}))
    assert cli.main(["train", str(data_dir), "--config", str(bad),
                     "--out", run]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_seed_must_fit_in_64_bits(data_dir, tmp_path, capsys):
    for bad_seed in ("-1", str(2 ** 64)):
        with pytest.raises(SystemExit):
            cli.main(["train", str(data_dir), "--seed", bad_seed,
                      "--out", str(tmp_path / "run")])
    capsys.readouterr()


def test_infer_missing_checkpoint_exits_2(tmp_path, capsys):
    img = tmp_path / "x.png"
    D.save_image(img, np.full((16, 16), 0.5), 8)
    assert cli.main(["infer", str(tmp_path / "none.ckpt"), str(img),
                     "--out", str(tmp_path / "sr")]) == 2
    assert "error" in capsys.readouterr().err


def test_check_grad_list(capsys):
    assert cli.main(["check-grad", "--list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(gradcheck.list_checks())
    assert all("." in line for line in lines)


def test_check_grad_single_module(capsys):
    assert cli.main(["check-grad", "losses"]) == 0
    out = capsys.readouterr().out
    assert "0 failures" in out
    assert cli.main(["check-grad", "no_such_module"]) == 2
    capsys.readouterr()


def test_check_grad_reports_failures_with_exit_1(capsys):
    gradcheck.CHECKS["bogus"] = [("always_wrong", lambda: 1.0)]
    try:
        assert cli.main(["check-grad", "bogus"]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and "1 failures" in out
    finally:
        del gradcheck.CHECKS["bogus"]
