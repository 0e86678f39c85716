"""Experiment configuration: flat key=value files with one section per run.

A file with a single unnamed block describes one experiment; named sections
describe a suite, with the DEFAULT section supplying shared values. Every
key is validated against a fixed table, unknown keys are rejected outright.
Omitted keys fall back first to per-environment defaults and then to the
Hyperparams defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path

from .agent import VARIANTS, Hyperparams
from .envs import env_names
from .errors import UsageError

# tuned step budgets per task; everything else shares the global defaults.
# classic control trains on undiscounted returns, which is only sound
# because stored done flags cut targets at the horizon too
ENV_DEFAULTS = {
    "cartpole-v0": {"total_steps": 400_000, "epsilon_decay_steps": 40_000,
                    "eval_window": 10_000, "gamma": 1.0},
    "pendulum-v0": {"total_steps": 400_000, "epsilon_decay_steps": 40_000,
                    "eval_window": 10_000, "gamma": 1.0},
    "cartpole-v1": {"total_steps": 1_000_000, "epsilon_decay_steps": 100_000,
                    "eval_window": 20_000, "gamma": 1.0},
    "acrobot-v1": {"total_steps": 1_000_000, "epsilon_decay_steps": 100_000,
                   "eval_window": 20_000, "gamma": 1.0},
    "pixelgrid": {"total_steps": 5_000, "epsilon_decay_steps": 1_000,
                  "eval_window": 500, "min_history": 500,
                  "target_period": 250, "buffer_capacity": 5_000,
                  "recent_capacity": 2_000},
}

_HP_FIELDS = {f.name for f in dataclasses.fields(Hyperparams)}

_INT_KEYS = {"k", "buffer_capacity", "batch_size", "target_period",
             "total_steps", "epsilon_decay_steps", "min_history",
             "recent_capacity", "encoder_dim", "checkpoint_interval",
             "aei_period", "eval_window"}
_FLOAT_KEYS = {"learning_rate", "gamma", "epsilon_final", "lambda_value"}
_BOOL_KEYS = {"warm_start"}
_STR_KEYS = {"env", "variant", "lambda_mode", "output_dir", "seeds"}

KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env: str
    variant: str
    seeds: tuple[int, ...]
    eval_window: int
    output_dir: str
    hp: Hyperparams


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise UsageError(f"bad value {raw!r} for key {key!r}") from None


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        raise UsageError(f"bad seed list {raw!r}") from None
    if not seeds:
        raise UsageError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"seed list {seeds} has duplicates")
    return seeds


def parse_overrides(pairs) -> dict:
    """Turn ["key=value", ...] override strings into a typed mapping."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"override {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = raw
    return out


def _build_experiment(name: str, entries: dict, overrides: dict | None,
                      path: Path) -> ExperimentConfig:
    merged = dict(entries)
    merged.update(overrides or {})

    for key in merged:
        if key not in KNOWN_KEYS:
            raise UsageError(f"unknown config key {key!r} in [{name}]")
    if "env" not in merged:
        raise UsageError(f"[{name}] is missing the env key")
    env = merged["env"].strip()
    if env not in env_names():
        raise UsageError(
            f"unknown environment {env!r}, expected one of {env_names()}")
    variant = merged.get("variant", "cdakd").strip()
    if variant not in VARIANTS:
        raise UsageError(
            f"unknown variant {variant!r}, expected one of {VARIANTS}")

    values = dict(ENV_DEFAULTS[env])
    for key, raw in merged.items():
        if key in ("env", "output_dir", "seeds"):
            continue
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    values["variant"] = variant

    eval_window = int(values.pop("eval_window"))
    hp_kwargs = {k: v for k, v in values.items() if k in _HP_FIELDS}
    hp = Hyperparams(**hp_kwargs)

    if eval_window < 1:
        raise UsageError(f"eval_window must be at least 1, got {eval_window}")
    if eval_window > hp.total_steps:
        raise UsageError(
            f"eval_window {eval_window} exceeds total_steps {hp.total_steps}")

    seeds = _parse_seeds(merged.get("seeds", "0"))
    output_dir = merged.get("output_dir", "").strip() or str(
        Path("runs") / name)
    return ExperimentConfig(name=name, env=env, variant=variant, seeds=seeds,
                            eval_window=eval_window, output_dir=output_dir,
                            hp=hp)


def load_experiments(path, overrides=None) -> list[ExperimentConfig]:
    """Parse a config file into one ExperimentConfig per section.

    Any invalid section rejects the whole file, nothing is half-loaded.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError:
        parser.read_string(f"[{path.stem}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None

    overrides = parse_overrides(overrides) if not isinstance(
        overrides, dict) else overrides
    experiments = []
    for section in parser.sections():
        entries = dict(parser.items(section))
        experiments.append(
            _build_experiment(section, entries, overrides, path))
    if not experiments:
        raise UsageError(f"{path} defines no experiment sections")
    names = [e.name for e in experiments]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate experiment names in {path}")
    return experiments


def load_single_experiment(path, overrides=None,
                           seed: int | None = None) -> ExperimentConfig:
    experiments = load_experiments(path, overrides)
    if len(experiments) != 1:
        raise UsageError(
            f"{path} defines {len(experiments)} experiments; "
            "run multi-experiment files through the suite command")
    cfg = experiments[0]
    if seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(int(seed),))
    return cfg


def config_text(cfg: ExperimentConfig) -> str:
    """Render a config back to file syntax (used by manifests)."""
    buf = io.StringIO()
    buf.write(f"[{cfg.name}]\n")
    buf.write(f"env = {cfg.env}\n")
    buf.write(f"seeds = {','.join(str(s) for s in cfg.seeds)}\n")
    buf.write(f"eval_window = {cfg.eval_window}\n")
    buf.write(f"output_dir = {cfg.output_dir}\n")
    for field in dataclasses.fields(Hyperparams):
        value = getattr(cfg.hp, field.name)
        if value is None:
            continue
        buf.write(f"{field.name} = {value}\n")
    return buf.getvalue()
