import json
import os

import pytest
import yaml

from advdrive.checkpoint import load_checkpoint
from advdrive.cli import dispatch

MICRO_CONFIG = {
    "obs_mode": "lite21",
    "seed": 5,
    "scenario": {"preset": "t_intersection", "max_steps": 40},
    "ppo": {"minibatch": 16, "epochs_per_batch": 2, "train_batch": 32},
    "phases": {
        "baseline_episodes": 2,
        "baseline_step_cap": None,
        "adversary_episodes": 2,
        "adversary_step_cap": None,
        "retrain_episodes": 2,
        "retrain_step_cap": None,
    },
    "eval": {"episodes": 2, "max_steps": 40},
}


@pytest.fixture
def micro_config(tmp_path):
    path = tmp_path / "micro.yaml"
    path.write_text(yaml.safe_dump(MICRO_CONFIG))
    return str(path)


def test_usage_errors_exit_2(capsys):
    assert dispatch([]) == 2
    assert dispatch(["no-such-command"]) == 2
    assert dispatch(["evaluate"]) == 2  # --victims required
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert dispatch(["--help"]) == 0
    capsys.readouterr()


def test_runtime_error_exits_1_with_error_class(tmp_path, capsys):
    rc = dispatch(
        ["evaluate", "--victims", "victim1=/nonexistent.ckpt", "victim2=/n2.ckpt",
         "--out", str(tmp_path / "o")]
    )
    captured = capsys.readouterr()
    assert rc == 1
    assert "error_class=CheckpointError" in captured.err


def test_full_cli_flow(tmp_path, micro_config, capsys):
    base_out = tmp_path / "baseline"
    rc = dispatch(["train-baseline", "--config", micro_config, "--out", str(base_out)])
    assert rc == 0
    v1 = base_out / "checkpoints" / "victim1.ckpt"
    v2 = base_out / "checkpoints" / "victim2.ckpt"
    assert v1.exists() and v2.exists()
    assert (base_out / "run_manifest.json").exists()
    assert (base_out / "phase_manifest.json").exists()

    adv_out = tmp_path / "adv"
    rc = dispatch(
        ["train-adversary", "--config", micro_config, "--reward", "adv_offroad",
         "--victims", f"victim1={v1}", f"victim2={v2}", "--out", str(adv_out)]
    )
    assert rc == 0
    adv_ckpt = adv_out / "checkpoints" / "adversary.ckpt"
    assert adv_ckpt.exists()
    # the checkpoint is labeled with its reward kind
    assert load_checkpoint(adv_ckpt).reward_kind == "adv_offroad"

    retrain_out = tmp_path / "retrain"
    rc = dispatch(
        ["retrain", "--config", micro_config,
         "--victims", f"victim1={v1}", f"victim2={v2}",
         "--adversary", str(adv_ckpt), "--out", str(retrain_out)]
    )
    assert rc == 0
    assert (retrain_out / "checkpoints" / "victim1.ckpt").exists()

    eval_out = tmp_path / "eval_base"
    rc = dispatch(
        ["evaluate", "--config", micro_config, "--label", "baseline",
         "--victims", f"victim1={v1}", f"victim2={v2}", "--out", str(eval_out)]
    )
    assert rc == 0
    assert (eval_out / "report.json").exists()
    assert (eval_out / "report.txt").exists()
    assert (eval_out / "episode0.json").exists()
    assert (eval_out / "trajectories.svg").exists()
    assert (eval_out / "trajectories.csv").exists()

    eval_attack = tmp_path / "eval_attack"
    rc = dispatch(
        ["evaluate", "--config", micro_config, "--label", "attack_offroad",
         "--victims", f"victim1={v1}", f"victim2={v2}",
         "--adversary", str(adv_ckpt), "--out", str(eval_attack), "--dump-obs"]
    )
    assert rc == 0
    assert (eval_attack / "obs_victim1.ppm").exists()
    assert (eval_attack / "obs_adversary.ppm").exists()

    capsys.readouterr()
    cmp_out = tmp_path / "cmp"
    rc = dispatch(
        ["compare", str(eval_out / "report.json"), str(eval_attack / "report.json"),
         "--out", str(cmp_out)]
    )
    captured = capsys.readouterr()
    assert rc == 0
    assert "collision with cars" in captured.out
    assert (cmp_out / "compare.json").exists()
    assert (cmp_out / "compare.txt").exists()

    plot_out = tmp_path / "plot"
    rc = dispatch(
        ["plot", str(eval_attack / "episode0.json"), "--config", micro_config,
         "--out", str(plot_out)]
    )
    assert rc == 0
    assert (plot_out / "trajectories.svg").exists()


def test_demo_micro(tmp_path, micro_config, capsys):
    out = tmp_path / "demo"
    rc = dispatch(["demo", "--config", micro_config, "--out", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "composite error" in captured.out
    assert (out / "compare.txt").exists()
    assert (out / "compare.json").exists()
    assert (out / "run_manifest.json").exists()
    for cond in (
        "baseline", "attack_collision", "attack_offroad",
        "retrained_collision", "retrained_offroad",
    ):
        assert (out / "eval" / cond / "report.json").exists()
        assert (out / "eval" / cond / "trajectories.svg").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "demo"
    assert manifest["config"]["ppo"]["lr"] == 0.0006


def test_out_root_env_var(tmp_path, micro_config, monkeypatch, capsys):
    monkeypatch.setenv("ADVDRIVE_OUT_ROOT", str(tmp_path / "root"))
    rc = dispatch(["train-baseline", "--config", micro_config, "--out", "rel_dir"])
    capsys.readouterr()
    assert rc == 0
    assert (tmp_path / "root" / "rel_dir" / "checkpoints" / "victim1.ckpt").exists()


def test_seed_flag_overrides_config(tmp_path, micro_config, capsys):
    outs = []
    for seed, name in ((9, "a"), (9, "b")):
        out = tmp_path / name
        rc = dispatch(
            ["train-baseline", "--config", micro_config, "--seed", str(seed),
             "--episodes", "2", "--out", str(out)]
        )
        assert rc == 0
        outs.append((out / "checkpoints" / "victim1.ckpt").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]
