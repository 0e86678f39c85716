"""Diagnostics: approximation-error increments, interference, returns, FLOPs."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .nn import huber

log = logging.getLogger(__name__)

EVAL_COLUMNS = ("step", "seed", "variant", "env", "R_T", "aei",
                "loss_ori", "loss_distill", "epsilon", "lambda")


@dataclass
class EvalRecord:
    """One evaluation-window row of a run's progress log."""

    step: int
    seed: int
    variant: str
    env: str
    r_t: float
    aei: float
    loss_ori: float
    loss_distill: float
    epsilon: float
    lam: float

    def row(self) -> tuple:
        return (self.step, self.seed, self.variant, self.env, self.r_t,
                self.aei, self.loss_ori, self.loss_distill, self.epsilon,
                self.lam)


def td_deltas(net, batch, gamma: float) -> np.ndarray:
    """One-step TD errors of a single network against itself.

    delta = r + gamma * (1 - done) * max_a q(s', a; head w_s') - q(s, a; head w_s),
    evaluated with the stored context labels.
    """
    rows = np.arange(len(batch))
    q_all = net.q_all(net.features(batch.s, cache=False))
    q_sa = q_all[rows, batch.w_s, batch.a]
    q2_all = net.q_all(net.features(batch.s_next, cache=False))
    q2_max = q2_all[rows, batch.w_s_next, :].max(axis=1)
    return batch.r + gamma * (1.0 - batch.done) * q2_max - q_sa


def aei(net_before, net_after, recent, gamma: float, decode=None,
        chunk: int = 512) -> float:
    """Mean change of squared TD error across one optimizer update.

    `recent` is either a buffer exposing contents() or an already gathered
    batch; `decode` maps a stored-format chunk to network-ready arrays. The
    window is processed in chunks so pixel observations never materialize
    all at once. Positive values mean the update hurt the fit on recent
    experience.
    """
    batch = recent.contents() if hasattr(recent, "contents") else recent
    n = len(batch)
    if n == 0:
        raise UsageError("aei needs a non-empty window of recent transitions")
    total = 0.0
    for lo in range(0, n, chunk):
        part = batch.take(np.arange(lo, min(lo + chunk, n)))
        if decode is not None:
            part = decode(part)
        d_before = td_deltas(net_before, part, gamma)
        d_after = td_deltas(net_after, part, gamma)
        total += float(np.sum(d_after ** 2 - d_before ** 2))
    return total / n


def gradient_interference(net, loss_fn, batch_a, batch_b) -> float:
    """Inner product of two loss gradients, flattened over all parameters.

    loss_fn(net, batch) must return (loss, gradient dict). Negative values
    mean a step that helps batch_a hurts batch_b.
    """
    _, ga = loss_fn(net, batch_a)
    _, gb = loss_fn(net, batch_b)
    total = 0.0
    for name, _ in net.param_items():
        total += float(np.dot(ga[name].ravel(), gb[name].ravel()))
    return total


def avg_episode_return(episodes) -> float:
    """Mean undiscounted return over a list of per-episode reward sequences."""
    if len(episodes) == 0:
        raise UsageError("avg_episode_return needs at least one episode")
    return float(np.mean([float(np.sum(ep)) for ep in episodes]))


def max_deterioration_ratio(curve, floor: float) -> float:
    """Largest fraction of achieved performance later given back.

    For every window t with a later window u, measures
    (curve[t] - curve[u]) / (curve[t] - floor), clamped to [0, 1], and
    returns the maximum. A curve that never rises above the floor has no
    performance to lose; that degenerate case returns 0 with a warning.
    """
    curve = np.asarray(curve, dtype=np.float64)
    curve = curve[np.isfinite(curve)]
    if len(curve) < 2:
        return 0.0
    peaks = np.maximum.accumulate(curve)[:-1]
    later = curve[1:]
    headroom = peaks - floor
    valid = headroom > 0.0
    if not valid.any():
        log.warning("deterioration: curve never exceeded floor %s", floor)
        return 0.0
    ratios = (peaks[valid] - later[valid]) / headroom[valid]
    return float(np.clip(ratios, 0.0, 1.0).max())


def context_interference_matrix(agent, eval_sets, train_context: int,
                                steps: int) -> np.ndarray:
    """Relative change of per-context TD loss after focused training.

    Clones the agent, freezes its target network and centroids, trains the
    clone for `steps` optimizer updates on transitions from one context only
    (distillation off), and reports (after - before)/|before| per context.
    Entry train_context is the self effect; the others are cross effects.
    """
    if steps < 0:
        raise UsageError(f"steps must be non-negative, got {steps}")
    for idx, batch in enumerate(eval_sets):
        if len(batch) == 0:
            raise UsageError(f"evaluation set {idx} is empty")
    if not (0 <= train_context < len(eval_sets)):
        raise UsageError(
            f"train context {train_context} outside [0, {len(eval_sets)})")

    probe = copy.deepcopy(agent)
    before = np.array([probe.td_loss_on(b) for b in eval_sets])
    for _ in range(steps):
        batch = probe.sample_context_batch(train_context)
        probe.focused_update(batch)
    after = np.array([probe.td_loss_on(b) for b in eval_sets])
    denom = np.maximum(np.abs(before), 1e-12)
    return (after - before) / denom


@dataclass(frozen=True)
class FlopsConfig:
    """Inputs of the training-cost model.

    b: batch size, t_total: environment steps, i_updates: optimizer updates,
    k: context count, e_trunk: FLOPs of one trunk forward pass, m_head: FLOPs
    of one head forward pass.
    """

    b: float
    t_total: float
    i_updates: float
    k: float
    e_trunk: float
    m_head: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise UsageError(f"flops config field {name} must be positive")


def count_flops(cfg: FlopsConfig) -> float:
    """Forward-pass cost of one training run.

    Online and target networks each evaluate every head on b states per
    update; action selection evaluates the full network once per step and
    the context lookup costs one trunk pass per step.
    """
    per_net = cfg.e_trunk + cfg.k * cfg.m_head
    online = 2.0 * cfg.b * cfg.i_updates * per_net
    target = 2.0 * cfg.b * cfg.i_updates * per_net
    acting = cfg.t_total * per_net
    assignment = cfg.t_total * cfg.e_trunk
    return online + target + acting + assignment
