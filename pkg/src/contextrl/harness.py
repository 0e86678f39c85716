"""Experiment runner: seed loops, progress CSVs, manifests, summaries.

Output layout for one experiment:

    <output_dir>/
        manifest.txt              resolved settings, versions, per-seed notes
        summary.json              aggregate table (also written by summarize)
        seed_<s>/
            eval.csv              one row per evaluation window
            centroids.csv         one centroid snapshot per target sync
            agent.npz             final (and optionally periodic) checkpoint

Given one configuration and seed, every output byte except the manifest
timestamp is reproducible.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .agent import make_variant, save_agent
from .config import ExperimentConfig, config_text
from .envs import make
from .errors import UsageError
from .metrics import EVAL_COLUMNS, max_deterioration_ratio

log = logging.getLogger(__name__)


def _fmt(value) -> str:
    """Shortest round-trip decimal form, empty for missing."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def run_single_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Train one agent and write its seed directory. Returns run notes."""
    seed_dir = Path(cfg.output_dir) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    env = make(cfg.env)
    agent = make_variant(env, cfg.hp, seed)
    hp = agent.hp

    window = cfg.eval_window
    rows = []
    ep_returns = []
    ori_sum = ori_n = 0.0
    dis_sum = 0.0
    aei_sum = aei_n = 0.0
    started = time.monotonic()

    for t in range(1, hp.total_steps + 1):
        sm = agent.train_step()
        if sm.episode_return is not None:
            ep_returns.append(sm.episode_return)
        if sm.loss_ori is not None:
            ori_sum += sm.loss_ori
            dis_sum += sm.loss_distill
            ori_n += 1
        if sm.aei is not None:
            aei_sum += sm.aei
            aei_n += 1
        if t % window == 0:
            r_t = float(np.mean(ep_returns)) if ep_returns else float("nan")
            rows.append((
                t, seed, cfg.variant, cfg.env, _fmt(r_t),
                _fmt(aei_sum / aei_n if aei_n else None),
                _fmt(ori_sum / ori_n if ori_n else None),
                _fmt(dis_sum / ori_n if ori_n else None),
                _fmt(sm.epsilon), _fmt(sm.lam)))
            ep_returns = []
            ori_sum = ori_n = dis_sum = 0.0
            aei_sum = aei_n = 0.0
        if (hp.checkpoint_interval and t % hp.checkpoint_interval == 0
                and t < hp.total_steps):
            save_agent(seed_dir / f"agent_step{t}.npz", agent)

    with open(seed_dir / "eval.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_COLUMNS)
        writer.writerows(rows)

    _write_centroids(seed_dir / "centroids.csv", agent)
    save_agent(seed_dir / "agent.npz", agent)

    elapsed = time.monotonic() - started
    log.info("%s seed %d: %d steps in %.1fs", cfg.name, seed,
             hp.total_steps, elapsed)
    return {
        "seed": seed,
        "steps": hp.total_steps,
        "seconds": round(elapsed, 1),
        "warm_start_jittered": agent.warm_start_jittered,
        "encoder_seed": agent.encoder_seed,
    }


def _write_centroids(path, agent):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if agent.ctx is None:
            writer.writerow(("step", "context_id", "count"))
            return
        dim = agent.ctx.dim
        writer.writerow(("step", "context_id", "count")
                        + tuple(f"dim_{d}" for d in range(dim)))
        for step, cid, count, centroid in agent.centroid_snapshots:
            writer.writerow((step, cid, count) + tuple(
                _fmt(v) for v in centroid))


def _run_seed_task(payload):
    cfg_dict, seed = payload
    cfg = _config_from_dict(cfg_dict)
    return run_single_seed(cfg, seed)


def _config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    return d


def _config_from_dict(d: dict) -> ExperimentConfig:
    from .agent import Hyperparams

    d = dict(d)
    d["hp"] = Hyperparams(**d["hp"])
    d["seeds"] = tuple(d["seeds"])
    return ExperimentConfig(**d)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    """Run every seed of one experiment and write its directory."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    notes = _run_seeds([(cfg, s) for s in cfg.seeds], jobs)
    _write_manifest(out / "manifest.txt", [cfg], notes)
    summarize([out], out)
    return out


def _run_seeds(tasks, jobs: int) -> list[dict]:
    if jobs <= 1 or len(tasks) <= 1:
        return [run_single_seed(cfg, seed) for cfg, seed in tasks]
    payloads = [(_config_to_dict(cfg), seed) for cfg, seed in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_seed_task, payloads))


def run_suite(configs: list[ExperimentConfig], root=None,
              jobs: int = 1) -> Path:
    """Run several experiments and write a combined summary.

    All configurations are validated up front (they already were at parse
    time); output directories must not collide.
    """
    dirs = [Path(cfg.output_dir) for cfg in configs]
    if len(set(map(str, dirs))) != len(dirs):
        raise UsageError("suite experiments share an output_dir")
    root = Path(root) if root is not None else _common_root(dirs)

    tasks = [(cfg, seed) for cfg in configs for seed in cfg.seeds]
    results = _run_seeds(tasks, jobs)
    note_map = {}
    for (cfg, _), note in zip(tasks, results):
        note_map.setdefault(cfg.name, []).append(note)

    for cfg in configs:
        out = Path(cfg.output_dir)
        _write_manifest(out / "manifest.txt", [cfg], note_map[cfg.name])
    summarize(dirs, root)
    return root


def _common_root(dirs) -> Path:
    parents = {d.parent for d in dirs}
    return parents.pop() if len(parents) == 1 else Path(".")


def _write_manifest(path, configs, notes):
    lines = [
        f"contextrl {__version__}",
        f"python {sys.version.split()[0]}",
        f"numpy {np.__version__}",
        f"written {time.strftime('%Y-%m-%d %H:%M:%S')}",
        "",
    ]
    for cfg in configs:
        lines.append(config_text(cfg).rstrip())
        lines.append("")
    for note in notes:
        lines.append(
            "seed {seed}: steps={steps} seconds={seconds} "
            "warm_start_jittered={warm_start_jittered} "
            "encoder_seed={encoder_seed}".format(**note))
    Path(path).write_text("\n".join(lines) + "\n")


# ---- summaries ------------------------------------------------------------

def read_eval_csv(path) -> dict:
    """Columns of one eval.csv as numpy arrays (strings left as lists)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = list(zip(*[row for row in reader]))
    if not raw:
        raise UsageError(f"{path} holds no evaluation rows")
    cols = dict(zip(header, raw))
    out = {}
    for name, values in cols.items():
        if name in ("variant", "env"):
            out[name] = list(values)
        else:
            out[name] = np.array(
                [float(v) if v else float("nan") for v in values])
    return out


def discover_experiments(root) -> list[Path]:
    root = Path(root)
    if not root.exists():
        raise UsageError(f"directory {root} does not exist")
    found = sorted(p.parent for p in root.rglob("manifest.txt"))
    if (root / "manifest.txt").is_file() and root not in found:
        found.append(root)
    return found


def _experiment_stats(exp_dir: Path) -> dict | None:
    seed_dirs = sorted(exp_dir.glob("seed_*"))
    tables = []
    for sd in seed_dirs:
        eval_path = sd / "eval.csv"
        if eval_path.is_file():
            tables.append(read_eval_csv(eval_path))
    if not tables:
        return None
    steps = tables[0]["step"]
    env = tables[0]["env"][0]
    variant = tables[0]["variant"][0]
    curves = np.stack([t["R_T"] for t in tables])  # (seeds, windows)
    floor = make(env).spec.return_range[0]

    highest = np.nanmax(curves, axis=1)
    finals = curves[:, -1]
    mean_curve = np.nanmean(curves, axis=0)
    ratio = max_deterioration_ratio(mean_curve, floor)
    seeds = [int(t["seed"][0]) for t in tables]
    return {
        "experiment": exp_dir.name,
        "path": str(exp_dir),
        "env": env,
        "variant": variant,
        "seeds": seeds,
        "windows": int(curves.shape[1]),
        "highest_mean": float(np.mean(highest)),
        "highest_std": float(np.std(highest)),
        "final_mean": float(np.nanmean(finals)),
        "final_std": float(np.nanstd(finals)),
        "max_deterioration_ratio": float(ratio),
        "deterioration_floor": float(floor),
        "_steps": steps,
        "_mean_curve": mean_curve,
        "_std_curve": np.nanstd(curves, axis=0),
    }


def summarize(run_dirs, out_dir=None) -> list[dict]:
    """Aggregate experiment directories into summary files and figures.

    Accepts experiment directories or any ancestor directory; writes
    summary.json, summary.csv and a figures/ directory under out_dir (the
    first directory by default) and returns the summary rows.
    """
    from . import figures

    exp_dirs = []
    for entry in ([run_dirs] if isinstance(run_dirs, (str, Path))
                  else list(run_dirs)):
        entry = Path(entry)
        if (entry / "manifest.txt").is_file():
            exp_dirs.append(entry)
        else:
            exp_dirs.extend(discover_experiments(entry))
    seen = set()
    exp_dirs = [d for d in exp_dirs
                if not (str(d) in seen or seen.add(str(d)))]
    if not exp_dirs:
        raise UsageError("no experiment directories with a manifest found")

    rows = []
    for exp_dir in exp_dirs:
        stats = _experiment_stats(exp_dir)
        if stats is None:
            log.warning("skipping %s: no completed seed runs", exp_dir)
            continue
        rows.append(stats)
    if not rows:
        raise UsageError("no completed runs to summarize")
    rows.sort(key=lambda r: (r["env"], r["variant"], r["experiment"]))

    out_dir = Path(out_dir) if out_dir is not None else exp_dirs[0]
    out_dir.mkdir(parents=True, exist_ok=True)

    public = [{k: v for k, v in row.items() if not k.startswith("_")}
              for row in rows]
    with open(out_dir / "summary.json", "w") as fh:
        json.dump({"contextrl": __version__, "experiments": public}, fh,
                  indent=2)
        fh.write("\n")

    fields = ["experiment", "env", "variant", "windows", "highest_mean",
              "highest_std", "final_mean", "final_std",
              "max_deterioration_ratio", "deterioration_floor"]
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in public:
            writer.writerow([row[f] for f in fields])

    figures.render_all(rows, out_dir / "figures")
    return public
