"""Config files, run directories, summaries, and the CLI entry points."""

import json

import numpy as np
import pytest

from contextrl.cli import main
from contextrl.config import (
    ENV_DEFAULTS,
    config_text,
    load_experiments,
    load_single_experiment,
    parse_overrides,
)
from contextrl.errors import UsageError
from contextrl.harness import (
    discover_experiments,
    read_eval_csv,
    run_experiment,
    run_single_seed,
    run_suite,
    summarize,
)
from contextrl.metrics import EVAL_COLUMNS

TINY = """\
env = cartpole-v0
variant = cdakd
k = 3
seeds = 0
total_steps = 400
eval_window = 100
min_history = 60
target_period = 100
epsilon_decay_steps = 200
buffer_capacity = 1000
batch_size = 8
recent_capacity = 200
"""


def write_tiny(tmp_path, name="tiny", extra="", drop=()):
    lines = [ln for ln in TINY.splitlines()
             if ln.split(" =")[0] not in drop]
    text = "\n".join(lines) + "\n" + extra
    path = tmp_path / f"{name}.cfg"
    path.write_text(text)
    return path


# ---- config parsing ----------------------------------------------------------

def test_single_section_injected_from_filename(tmp_path):
    path = write_tiny(tmp_path, name="smoke")
    cfg = load_single_experiment(path)
    assert cfg.name == "smoke"
    assert cfg.env == "cartpole-v0"
    assert cfg.seeds == (0,)
    assert cfg.eval_window == 100
    assert cfg.hp.total_steps == 400
    assert cfg.output_dir.endswith("smoke")


def test_env_defaults_fill_missing_keys(tmp_path):
    path = tmp_path / "defaults.cfg"
    path.write_text("env = acrobot-v1\n")
    cfg = load_single_experiment(path)
    assert cfg.hp.total_steps == ENV_DEFAULTS["acrobot-v1"]["total_steps"]
    assert cfg.eval_window == 20_000
    assert cfg.hp.k == 3 and cfg.variant == "cdakd"

    pix = tmp_path / "pix.cfg"
    pix.write_text("env = pixelgrid\n")
    cfg = load_single_experiment(pix)
    assert cfg.hp.min_history == 500
    assert cfg.hp.target_period == 250
    assert cfg.hp.buffer_capacity == 5_000


def test_file_values_override_env_defaults(tmp_path):
    path = tmp_path / "override.cfg"
    path.write_text("env = cartpole-v0\ntotal_steps = 1234\n"
                    "eval_window = 617\n")
    cfg = load_single_experiment(path)
    assert cfg.hp.total_steps == 1234


def test_cli_overrides_beat_file_values(tmp_path):
    path = write_tiny(tmp_path)
    cfg = load_single_experiment(path, overrides=["k=5", "seeds=3,4"])
    assert cfg.hp.k == 5
    assert cfg.seeds == (3, 4)


def test_parse_overrides_validation():
    assert parse_overrides(["gamma=0.9"]) == {"gamma": "0.9"}
    assert parse_overrides(None) == {}
    with pytest.raises(UsageError):
        parse_overrides(["gamma"])
    with pytest.raises(UsageError):
        parse_overrides(["discount=0.9"])


def test_seed_list_forms(tmp_path):
    for raw, want in (("0,1,2", (0, 1, 2)), ("5 6", (5, 6)), ("7", (7,))):
        path = write_tiny(tmp_path, name=f"s{want[0]}", drop=("seeds",),
                          extra=f"seeds = {raw}\n")
        assert load_single_experiment(path).seeds == want
    with pytest.raises(UsageError):
        load_single_experiment(
            write_tiny(tmp_path, name="dup", drop=("seeds",),
                       extra="seeds = 1,1\n"))
    with pytest.raises(UsageError):
        load_single_experiment(
            write_tiny(tmp_path, name="noseed", drop=("seeds",),
                       extra="seeds =\n"))


def test_unknown_keys_and_envs_reject_file(tmp_path):
    with pytest.raises(UsageError):
        load_single_experiment(
            write_tiny(tmp_path, name="junk", extra="ddqn = yes\n"))
    bad_env = tmp_path / "bad_env.cfg"
    bad_env.write_text("env = mountaincar\n")
    with pytest.raises(UsageError):
        load_single_experiment(bad_env)
    bad_var = tmp_path / "bad_var.cfg"
    bad_var.write_text("env = cartpole-v0\nvariant = rainbow\n")
    with pytest.raises(UsageError):
        load_single_experiment(bad_var)
    with pytest.raises(UsageError):
        load_single_experiment(tmp_path / "missing.cfg")


def test_one_bad_section_rejects_whole_suite(tmp_path):
    path = tmp_path / "suite.cfg"
    path.write_text(
        "[good]\nenv = cartpole-v0\ntotal_steps = 200\neval_window = 100\n"
        "min_history = 10\nepsilon_decay_steps = 100\n"
        "[bad]\nenv = cartpole-v0\nbogus_key = 1\n")
    with pytest.raises(UsageError):
        load_experiments(path)


def test_eval_window_bounds(tmp_path):
    with pytest.raises(UsageError):
        load_single_experiment(write_tiny(
            tmp_path, name="w0", drop=("eval_window",),
            extra="eval_window = 0\n"))
    with pytest.raises(UsageError):
        load_single_experiment(write_tiny(
            tmp_path, name="wbig", drop=("eval_window",),
            extra="eval_window = 4000\n"))


def test_multi_section_file_needs_suite_command(tmp_path):
    path = tmp_path / "two.cfg"
    path.write_text("[a]\nenv = cartpole-v0\n[b]\nenv = cartpole-v0\n")
    assert len(load_experiments(path)) == 2
    with pytest.raises(UsageError):
        load_single_experiment(path)


def test_default_section_shares_values(tmp_path):
    path = tmp_path / "shared.cfg"
    path.write_text(
        "[DEFAULT]\nenv = cartpole-v0\ntotal_steps = 300\n"
        "eval_window = 100\nmin_history = 20\nepsilon_decay_steps = 100\n"
        "[first]\nseeds = 0\n[second]\nseeds = 1\nk = 4\n")
    first, second = load_experiments(path)
    assert first.hp.total_steps == second.hp.total_steps == 300
    assert first.seeds == (0,) and second.seeds == (1,)
    assert second.hp.k == 4 and first.hp.k == 3


def test_config_text_round_trips(tmp_path):
    cfg = load_single_experiment(
        write_tiny(tmp_path, extra="output_dir = runs/tiny\n"))
    back_path = tmp_path / "back.cfg"
    back_path.write_text(config_text(cfg))
    back = load_single_experiment(back_path)
    assert back == cfg


# ---- run directories -----------------------------------------------------------

def tiny_cfg(tmp_path, name="tiny", **kw):
    extra = "".join(f"{k} = {v}\n" for k, v in kw.items())
    path = write_tiny(tmp_path, name=name, drop=tuple(kw), extra=extra)
    cfg = load_single_experiment(
        path, overrides=[f"output_dir={tmp_path / name}_out"])
    return cfg


def test_run_single_seed_outputs(tmp_path):
    cfg = tiny_cfg(tmp_path)
    note = run_single_seed(cfg, 0)
    assert note["seed"] == 0 and note["steps"] == 400
    assert note["warm_start_jittered"] is False

    seed_dir = tmp_path / "tiny_out" / "seed_0"
    table = read_eval_csv(seed_dir / "eval.csv")
    assert set(table) == set(EVAL_COLUMNS)
    np.testing.assert_array_equal(table["step"], [100, 200, 300, 400])
    assert table["variant"] == ["cdakd"] * 4
    assert np.all(np.isfinite(table["R_T"]))  # cartpole always ends episodes
    assert np.isnan(table["loss_ori"][0]) is not None  # column parses
    assert (seed_dir / "agent.npz").is_file()

    with open(seed_dir / "centroids.csv") as fh:
        header = fh.readline().strip().split(",")
        body = fh.read().splitlines()
    assert header[:3] == ["step", "context_id", "count"]
    assert header[3:] == [f"dim_{d}" for d in range(4)]
    # one row per context per sync (syncs at 100..400, init at step 60)
    assert len(body) == 4 * 3
    assert body[0].split(",")[0] == "100"


def test_losses_blank_before_learning_starts(tmp_path):
    cfg = tiny_cfg(tmp_path, name="late", min_history=150)
    run_single_seed(cfg, 0)
    table = read_eval_csv(tmp_path / "late_out" / "seed_0" / "eval.csv")
    assert np.isnan(table["loss_ori"][0])  # first window held no updates
    assert np.isfinite(table["loss_ori"][1:]).all()


def test_dqn_centroids_file_is_header_only(tmp_path):
    cfg = tiny_cfg(tmp_path, name="plain", variant="dqn")
    run_single_seed(cfg, 0)
    text = (tmp_path / "plain_out" / "seed_0" / "centroids.csv").read_text()
    assert text.strip() == "step,context_id,count"


def test_reruns_are_byte_identical(tmp_path):
    cfg_a = tiny_cfg(tmp_path, name="rep_a")
    cfg_b = tiny_cfg(tmp_path, name="rep_b")
    run_single_seed(cfg_a, 0)
    run_single_seed(cfg_b, 0)
    for fname in ("eval.csv", "centroids.csv"):
        a = (tmp_path / "rep_a_out" / "seed_0" / fname).read_bytes()
        b = (tmp_path / "rep_b_out" / "seed_0" / fname).read_bytes()
        assert a == b


def test_checkpoint_interval_files(tmp_path):
    cfg = tiny_cfg(tmp_path, name="ckpt", checkpoint_interval=150)
    run_single_seed(cfg, 0)
    seed_dir = tmp_path / "ckpt_out" / "seed_0"
    assert (seed_dir / "agent_step150.npz").is_file()
    assert (seed_dir / "agent_step300.npz").is_file()
    assert not (seed_dir / "agent_step450.npz").exists()
    assert (seed_dir / "agent.npz").is_file()


def test_run_experiment_writes_manifest_and_summary(tmp_path):
    cfg = tiny_cfg(tmp_path, name="full", seeds="0, 1")
    out = run_experiment(cfg)
    manifest = (out / "manifest.txt").read_text()
    assert "contextrl" in manifest and "numpy" in manifest
    assert "[full]" in manifest and "env = cartpole-v0" in manifest
    assert "seed 0:" in manifest and "seed 1:" in manifest

    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["experiments"]) == 1
    row = summary["experiments"][0]
    assert row["experiment"] == "full_out"
    assert row["seeds"] == [0, 1]
    assert row["windows"] == 4
    assert "max_deterioration_ratio" in row
    assert (out / "summary.csv").is_file()
    assert (out / "figures" / "full_out.png").is_file()


def test_parallel_seeds_match_serial(tmp_path):
    serial = tiny_cfg(tmp_path, name="ser", seeds="0,1")
    parallel = tiny_cfg(tmp_path, name="par", seeds="0,1")
    run_experiment(serial, jobs=1)
    run_experiment(parallel, jobs=2)
    for seed in (0, 1):
        a = (tmp_path / "ser_out" / f"seed_{seed}" / "eval.csv").read_bytes()
        b = (tmp_path / "par_out" / f"seed_{seed}" / "eval.csv").read_bytes()
        assert a == b


def test_run_suite_combined_summary(tmp_path):
    a = tiny_cfg(tmp_path, name="suite_a")
    b = tiny_cfg(tmp_path, name="suite_b", variant="dqn")
    root = run_suite([a, b], root=tmp_path)
    summary = json.loads((root / "summary.json").read_text())
    variants = {r["experiment"]: r["variant"] for r in summary["experiments"]}
    assert variants == {"suite_a_out": "cdakd", "suite_b_out": "dqn"}
    # both experiments share the env, so an overlay figure appears
    assert (root / "figures" / "env_cartpole-v0.png").is_file()
    assert (tmp_path / "suite_a_out" / "manifest.txt").is_file()

    with pytest.raises(UsageError):
        run_suite([a, a], root=tmp_path)


def test_summarize_discovers_nested_dirs(tmp_path):
    cfg = tiny_cfg(tmp_path, name="nested")
    run_experiment(cfg)
    rows = summarize(tmp_path, out_dir=tmp_path / "agg")
    assert rows[0]["experiment"] == "nested_out"
    assert (tmp_path / "agg" / "summary.json").is_file()
    assert discover_experiments(tmp_path) == [tmp_path / "nested_out"]
    with pytest.raises(UsageError):
        summarize(tmp_path / "empty_nowhere")


def test_read_eval_csv_rejects_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(",".join(EVAL_COLUMNS) + "\n")
    with pytest.raises(UsageError):
        read_eval_csv(path)


# ---- command line ---------------------------------------------------------------

def test_cli_train_and_summarize(tmp_path, capsys):
    path = write_tiny(tmp_path)
    out = tmp_path / "cli_out"
    code = main(["train", "--config", str(path),
                 "--override", f"output_dir={out}"])
    assert code == 0
    assert (out / "seed_0" / "eval.csv").is_file()
    assert "finished" in capsys.readouterr().out

    assert main(["summarize", "--dir", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "cli_out" in printed and "deterioration" in printed


def test_cli_train_seed_flag_limits_run(tmp_path):
    path = write_tiny(tmp_path, drop=("seeds",), extra="seeds = 0,1,2\n")
    out = tmp_path / "one_seed"
    code = main(["train", "--config", str(path), "--seed", "5",
                 "--override", f"output_dir={out}"])
    assert code == 0
    assert (out / "seed_5").is_dir()
    assert not (out / "seed_0").exists()


def test_cli_suite(tmp_path, capsys):
    path = tmp_path / "pair.cfg"
    path.write_text(
        "[DEFAULT]\nenv = cartpole-v0\ntotal_steps = 300\neval_window = 100\n"
        "min_history = 50\nepsilon_decay_steps = 150\nbatch_size = 8\n"
        "buffer_capacity = 500\nrecent_capacity = 100\ntarget_period = 100\n"
        f"[sa]\noutput_dir = {tmp_path}/sa\n"
        f"[sb]\noutput_dir = {tmp_path}/sb\nvariant = dqn\n")
    code = main(["suite", "--file", str(path), "--out", str(tmp_path / "agg")])
    assert code == 0
    assert "2 experiments" in capsys.readouterr().out
    assert (tmp_path / "agg" / "summary.json").is_file()


def test_cli_flops(tmp_path, capsys):
    path = tmp_path / "flops.cfg"
    path.write_text("b = 32\nT = 1e7\nI = 0.25e7\nk = 4\n"
                    "E = 28.582e6\nM = 3.215e6\n")
    assert main(["flops", "--config", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "1.396168e+16"

    ones = tmp_path / "ones.cfg"
    ones.write_text("b=1\nT=1\nI=1\nk=1\nE=1\nM=1\n")
    assert main(["flops", "--config", str(ones)]) == 0
    assert capsys.readouterr().out.strip() == "1.100000e+01"


def test_cli_error_exit_codes(tmp_path, capsys):
    missing = main(["train", "--config", str(tmp_path / "nope.cfg")])
    assert missing == 2
    bad = write_tiny(tmp_path, name="bad", extra="bogus = 1\n")
    assert main(["train", "--config", str(bad)]) == 2
    flops = tmp_path / "f.cfg"
    flops.write_text("b=1\nT=1\nI=1\nk=1\nE=1\n")  # missing M
    assert main(["flops", "--config", str(flops)]) == 2
    flops.write_text("b=1\nT=1\nI=1\nk=1\nE=1\nM=1\nz=2\n")
    assert main(["flops", "--config", str(flops)]) == 2
    capsys.readouterr()
