import csv
import json

import pytest

from hgm.errors import ConfigError, MissingCheckpoint, MissingLog
from hgm.harness import (config_hash, evaluate, export_run, load_config, match_flat_config, pipeline_train,
                         report_from_log)
from hgm.harness.cli import main
from hgm.harness.compare import hierarchy_budget, past_half
from hgm.harness.export import command_change_ticks
from hgm.harness.flat import sac_param_count
from hgm.harness.pipeline import hierarchical_env_steps, read_curve, save_loco

TINY = {
    "run.seed": 3,
    "loco.budget": 600, "loco.warmup_steps": 200, "loco.eval_every": 300, "loco.eval_episodes": 2,
    "loco.episode_steps": 50,
    "planner.budget": 40, "planner.warmup": 20, "planner.batch_size": 16, "planner.eval_every": 20,
    "planner.eval_episodes": 2, "planner.episode_ticks": 4,
    "flat.warmup_steps": 100, "flat.eval_episodes": 1,
    "eval.n_episodes": 2,
}


def tiny(**extra):
    return load_config(overrides={**TINY, **extra})


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    cfg = tiny()
    run = tmp_path_factory.mktemp("tiny") / "run"
    art = pipeline_train(cfg, run)
    return cfg, run, art


# ---------------------------------------------------------------- configuration


def test_defaults_validate():
    cfg = load_config()
    assert cfg.validate() is cfg
    assert config_hash(cfg) == config_hash(load_config())


@pytest.mark.parametrize("overrides", [
    {"run.bogus": 1},
    {"schedule.freq_mid": 24.0},  # 500 / 24 is not a whole number of low ticks
    {"run.task": 4},
    {"world.friction_coeff": 0.0},
    {"eval.scenarios": ["baseline", "earthquake"]},
    {"loco.budget": 1.5},
])
def test_invalid_config_rejected(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_invalid_config_rejected_before_any_output(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(tmp_path / "missing.toml"), "--out", str(out)]) == 2
    assert not out.exists()


def test_config_file_and_snapshot_round_trip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[run]\nseed = 9\n[planner]\nbudget = 12\n")
    cfg = load_config(path)
    assert (cfg.run.seed, cfg.planner.budget) == (9, 12)
    snap = tmp_path / "snap.json"
    snap.write_text(json.dumps(cfg.to_dict()))
    assert config_hash(load_config(snap)) == config_hash(cfg)


# ---------------------------------------------------------------- flat matching


@pytest.mark.parametrize("target", [31_426, 12_000, 80_000])
def test_flat_parameters_within_one_percent(target):
    f = match_flat_config(target, 57)
    assert f.param_count == sac_param_count(57, 8, f.hidden)
    assert abs(f.param_count - target) / target <= 0.01


def test_flat_match_impossible_target():
    with pytest.raises(ValueError):
        match_flat_config(10, 57)


def test_budget_accounting():
    cfg = load_config()
    ratio = round(cfg.schedule.freq_mid / cfg.schedule.freq_high)
    assert hierarchy_budget(cfg) == cfg.loco.budget + ratio * cfg.planner.budget
    assert hierarchical_env_steps(cfg, 0) == cfg.loco.budget
    rows = [{"step": s} for s in (10, 50, 51, 100)]
    assert [r["step"] for r in past_half(rows, 100)] == [51, 100]


# ---------------------------------------------------------------- pipeline


def test_pipeline_writes_hashed_artifacts(tiny_run):
    cfg, run, art = tiny_run
    chash = config_hash(cfg)
    assert all(r["ok"] for r in art.stage1)
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["config_hash"] == chash
    for line in (run / "train.jsonl").read_text().splitlines():
        assert json.loads(line)["config_hash"] == chash
    assert {"checkpoints/loco.hgmt", "checkpoints/planner.hgmt", "hier_curve.csv"} <= set(manifest["files"])


def test_curves_share_the_step_axis(tiny_run):
    cfg, run, art = tiny_run
    steps = [r["step"] for r in read_curve(run / "hier_curve.csv")]
    assert steps == sorted(steps)
    planner = [hierarchical_env_steps(cfg, r["step"]) for r in read_curve(run / "planner_curve.csv")]
    loco = [r["step"] for r in read_curve(run / "loco_curve.csv")]
    assert steps == loco + planner


def test_pipeline_is_reproducible(tiny_run, tmp_path):
    cfg, run, _ = tiny_run
    again = tmp_path / "again"
    pipeline_train(cfg, again)
    a = json.loads((run / "manifest.json").read_text())
    b = json.loads((again / "manifest.json").read_text())
    assert a == b


# ---------------------------------------------------------------- evaluation


def test_zero_episodes_gives_empty_report(tiny_run, tmp_path):
    cfg, run, _ = tiny_run
    rep = evaluate(cfg, run / "checkpoints", n_episodes=0, out=tmp_path)
    assert rep["scenarios"] == {}
    assert (tmp_path / "eval.jsonl").read_text() == ""


def test_friction_scenario_holds_every_episode(tiny_run, tmp_path):
    cfg, run, _ = tiny_run
    evaluate(cfg, run / "checkpoints", n_episodes=2, perturbations=["friction"], out=tmp_path, trace=False)
    rows = [json.loads(x) for x in (tmp_path / "eval.jsonl").read_text().splitlines()]
    assert len(rows) == 2 and all(r["friction_coeff"] == 0.3 for r in rows)


def test_report_recomputable_from_log(tiny_run, tmp_path):
    cfg, run, _ = tiny_run
    rep = evaluate(cfg, run / "checkpoints", n_episodes=2, perturbations=["baseline", "push"], out=tmp_path)
    assert report_from_log(tmp_path / "eval.jsonl")["scenarios"] == rep["scenarios"]
    assert rep["config_hash"] == config_hash(cfg)
    for line in (tmp_path / "eval.jsonl").read_text().splitlines():
        assert json.loads(line)["config_hash"] == config_hash(cfg)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(MissingCheckpoint):
        evaluate(tiny(), tmp_path / "nothing", n_episodes=1, out=tmp_path)


def test_physics_mismatch_refused(tiny_run, tmp_path):
    cfg, run, art = tiny_run
    other = tiny(**{"world.friction_coeff": cfg.world.friction_coeff * 2})
    ckpt = tmp_path / "checkpoints"
    ckpt.mkdir()
    save_loco(ckpt / "loco.hgmt", other, art.loco_nets)
    (ckpt / "planner.hgmt").write_bytes((run / "checkpoints" / "planner.hgmt").read_bytes())
    with pytest.raises(ConfigError):
        evaluate(cfg, ckpt, n_episodes=1, out=tmp_path)


# ---------------------------------------------------------------- export


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_export_timescale_spacing_and_idempotence(tiny_run, tmp_path):
    cfg, run, _ = tiny_run
    work = tmp_path / "run"
    work.mkdir()
    (work / "config.snapshot").write_bytes((run / "config.snapshot").read_bytes())
    evaluate(cfg, run / "checkpoints", n_episodes=1, perturbations=["baseline"], out=work)
    bundle = export_run(work)
    rows = _rows(bundle / "timescale.csv")
    for level, spacing in (("high", 1000), ("mid", 20), ("low", 1)):
        ticks = command_change_ticks(rows, level)
        assert len(ticks) > 1
        assert {b - a for a, b in zip(ticks, ticks[1:])} == {spacing}
    before = {p.name: p.read_bytes() for p in bundle.iterdir()}
    export_run(work)
    assert {p.name: p.read_bytes() for p in bundle.iterdir()} == before


def test_export_empty_logs_gives_headers_only(tmp_path):
    (tmp_path / "eval.jsonl").write_text("")
    bundle = export_run(tmp_path)
    for name in ("com_trajectories.csv", "timescale.csv", "learning_curves.csv", "eval_episodes.csv"):
        lines = (bundle / name).read_text().splitlines()
        assert len(lines) == 1 and lines[0]


def test_export_without_logs(tmp_path):
    with pytest.raises(MissingLog):
        export_run(tmp_path)
    assert main(["export", "--out", str(tmp_path)]) == 2


# ---------------------------------------------------------------- command line


def test_cli_exit_codes(tiny_run, tmp_path, capsys):
    cfg, run, _ = tiny_run
    conf = tmp_path / "tiny.toml"
    conf.write_text(json.dumps(cfg.to_dict()))
    code = main(["eval", "--config", str(conf), "--out", str(tmp_path), "--episodes", "1",
                 "--checkpoints", str(run / "checkpoints")])
    assert code == 0
    assert "baseline" in json.loads(capsys.readouterr().out)["scenarios"]
    assert main(["eval", "--config", str(conf), "--out", str(tmp_path / "empty")]) == 2
