"""Learning-curve figures rendered to files next to the delimited output."""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

log = logging.getLogger(__name__)

plt.rcParams.update({
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
})


def save_learning_curve(path, steps, mean, std, title, label=None):
    fig, ax = plt.subplots()
    ax.plot(steps, mean, lw=1.6, label=label)
    if std is not None:
        ax.fill_between(steps, mean - std, mean + std, alpha=0.25, lw=0)
    ax.set_xlabel("environment step")
    ax.set_ylabel("mean episode return")
    ax.set_title(title)
    if label:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_comparison(path, curves, title):
    """Overlay several (steps, mean, std) curves keyed by label."""
    fig, ax = plt.subplots()
    for label, (steps, mean, std) in curves.items():
        line, = ax.plot(steps, mean, lw=1.6, label=label)
        if std is not None:
            ax.fill_between(steps, mean - std, mean + std, alpha=0.18,
                            lw=0, color=line.get_color())
    ax.set_xlabel("environment step")
    ax.set_ylabel("mean episode return")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_all(rows, fig_dir):
    """One figure per experiment plus one overlay per environment."""
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    by_env = {}
    for row in rows:
        name = row["experiment"]
        save_learning_curve(
            fig_dir / f"{name}.png", row["_steps"], row["_mean_curve"],
            row["_std_curve"], f"{name} ({row['env']}, {row['variant']})")
        by_env.setdefault(row["env"], {})[name] = (
            row["_steps"], row["_mean_curve"], row["_std_curve"])
    for env, curves in by_env.items():
        if len(curves) > 1:
            save_comparison(fig_dir / f"env_{env}.png", curves, env)
    log.info("wrote %d figures to %s", len(rows), fig_dir)
