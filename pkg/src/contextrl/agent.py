"""Context-divided deep Q-learning agent and its ablation variants.

One Agent owns the value network, its frozen target copy, the context
model, both experience buffers, and five independent RNG streams (network
init, encoder, context, action selection, batch sampling plus episode
seeds). Keeping the streams separate means a variant that skips the context
machinery consumes exactly the same action and sampling randomness as one
that uses it, so degenerate configurations reproduce each other bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import metrics
from .context import (ContextModel, random_partition, contextualize_gs,
                      score_bin_edges, warm_start)
from .envs import PixelObservation, make
from .errors import TrainingDiverged, UsageError
from .nn import (AdamState, MultiHeadQNet, RandomEncoder, adam_step, huber,
                 huber_grad, layout_for)
from .replay import Batch, FrameStore, RecentBuffer, ReplayBuffer, Transition

VARIANTS = ("cdakd", "dqn", "no_clustering", "no_distill", "single_head",
            "cdakd_is", "cdakd_gs", "cdakd_re")


@dataclass(frozen=True)
class Hyperparams:
    k: int = 3
    buffer_capacity: int = 50_000
    batch_size: int = 32
    learning_rate: float = 5e-4
    gamma: float = 0.99
    target_period: int = 1_000
    total_steps: int = 400_000
    epsilon_final: float = 0.02
    epsilon_decay_steps: int = 40_000
    min_history: int = 1_000
    lambda_mode: str = "scheduled"   # "scheduled" tracks 1 - epsilon
    lambda_value: float = 0.0        # used when lambda_mode is "fixed"
    variant: str = "cdakd"
    warm_start: bool = True
    encoder_dim: int = 50
    recent_capacity: int = 10_000
    aei_period: int | None = None    # None: every target sync, 0: disabled
    checkpoint_interval: int = 0     # 0: final checkpoint only

    def __post_init__(self):
        checks = [
            (self.k >= 1, "k must be at least 1"),
            (self.buffer_capacity >= 1, "buffer_capacity must be at least 1"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.learning_rate > 0, "learning_rate must be positive"),
            (0.0 <= self.gamma <= 1.0, "gamma must lie in [0, 1]"),
            (self.target_period >= 1, "target_period must be at least 1"),
            (self.total_steps >= 1, "total_steps must be at least 1"),
            (0.0 < self.epsilon_final <= 1.0,
             "epsilon_final must lie in (0, 1]"),
            (self.epsilon_decay_steps >= 1,
             "epsilon_decay_steps must be at least 1"),
            (self.min_history >= 0, "min_history must be non-negative"),
            (self.lambda_mode in ("scheduled", "fixed"),
             f"unknown lambda_mode {self.lambda_mode!r}"),
            (0.0 <= self.lambda_value <= 1.0,
             "lambda_value must lie in [0, 1]"),
            (self.variant in VARIANTS, f"unknown variant {self.variant!r}"),
            (self.encoder_dim >= 1, "encoder_dim must be at least 1"),
            (self.recent_capacity >= 1, "recent_capacity must be at least 1"),
            (self.aei_period is None or self.aei_period >= 0,
             "aei_period must be None or non-negative"),
            (self.checkpoint_interval >= 0,
             "checkpoint_interval must be non-negative"),
        ]
        for ok, message in checks:
            if not ok:
                raise UsageError(message)


def normalize_variant(hp: Hyperparams) -> Hyperparams:
    """Fold variant names into concrete head counts and loss weights."""
    if hp.variant == "dqn":
        return dataclasses.replace(
            hp, k=1, lambda_mode="fixed", lambda_value=0.0)
    if hp.variant == "single_head":
        return dataclasses.replace(hp, k=1)
    if hp.variant == "no_distill":
        return dataclasses.replace(hp, lambda_mode="fixed", lambda_value=0.0)
    return hp


def epsilon_at(step: int, hp: Hyperparams) -> float:
    """Linear exploration schedule: 1.0 at step 0 down to the floor."""
    frac = min(max(step, 0) / hp.epsilon_decay_steps, 1.0)
    return 1.0 + (hp.epsilon_final - 1.0) * frac


def lambda_at(epsilon: float, hp: Hyperparams) -> float:
    if hp.lambda_mode == "fixed":
        return hp.lambda_value
    return 1.0 - epsilon


@dataclass
class StepMetrics:
    """Per-step training telemetry returned by Agent.train_step."""

    step: int
    action: int
    reward: float
    done: bool
    episode_return: float | None
    loss_ori: float | None
    loss_distill: float | None
    loss: float | None
    aei: float | None
    epsilon: float
    lam: float
    synced: bool


class VectorCodec:
    """Stores flat float states verbatim."""

    def __init__(self, dim: int):
        self.state_shape = (dim,)
        self.state_dtype = np.float64

    def encode(self, obs):
        return obs

    def decode_batch(self, arr):
        return arr


class PixelCodec:
    """Stores frame-id vectors against a shared deduplicating FrameStore."""

    def __init__(self):
        self.store = FrameStore()
        self.state_shape = (4,)
        self.state_dtype = np.int64

    def encode(self, obs):
        frames = obs.frames
        return np.array([self.store.add(frames[:, :, i]) for i in range(4)],
                        dtype=np.int64)

    def decode_batch(self, ids):
        return self.store.stacks(ids).astype(np.float64) / 255.0


def bellman_deltas(net, target, batch, gamma: float) -> np.ndarray:
    """TD errors with bootstrap values taken from the target network."""
    rows = np.arange(len(batch))
    q_sa = net.q_all(net.features(batch.s, cache=False))[
        rows, batch.w_s, batch.a]
    tq2 = target.q_all(target.features(batch.s_next, cache=False))
    q2_max = tq2[rows, batch.w_s_next, :].max(axis=1)
    return batch.r + gamma * (1.0 - batch.done) * q2_max - q_sa


def joint_loss_and_grads(net, target, batch: Batch, gamma: float, lam: float,
                         distill: str = "multi"):
    """Joint objective L = L_ori + lam * L_D and its exact gradients.

    L_ori is the mean Huber TD error on the stored (state, action, context)
    triples. L_D pulls the heads that were NOT active for a sample toward
    the target network's output for those heads: per sample the Huber gaps
    are averaged over actions, summed over the distilled heads, then
    averaged over the batch. distill selects the regularizer shape: "multi"
    covers the non-active heads, "self" distills the single head against
    its own target copy, "off" skips the term.

    The target network only ever provides teacher values; nothing flows
    back into it. Returns (l_ori, l_d, total, gradient dict).
    """
    if distill not in ("multi", "self", "off"):
        raise UsageError(f"unknown distill mode {distill!r}")
    m = len(batch)
    rows = np.arange(m)
    a_count = net.action_count
    k = net.k

    feats = net.features(batch.s, cache=True)
    q_all = net.q_all(feats)
    tq2 = target.q_all(target.features(batch.s_next, cache=False))
    q2_max = tq2[rows, batch.w_s_next, :].max(axis=1)
    q_tau = batch.r + gamma * (1.0 - batch.done) * q2_max
    delta = q_tau - q_all[rows, batch.w_s, batch.a]
    l_ori = float(np.mean(huber(delta)))

    dq_all = np.zeros_like(q_all)
    dq_all[rows, batch.w_s, batch.a] = -huber_grad(delta) / m

    l_d = 0.0
    if distill == "multi" and k > 1:
        teacher = target.q_all(target.features(batch.s, cache=False))
        diff = teacher - q_all
        mask = np.ones((m, k))
        mask[rows, batch.w_s] = 0.0
        denom = m * a_count
        l_d = float((huber(diff) * mask[:, :, None]).sum() / denom)
        if lam != 0.0:
            dq_all -= (lam / denom) * (huber_grad(diff) * mask[:, :, None])
    elif distill == "self":
        teacher = target.q_all(target.features(batch.s, cache=False))
        diff = teacher - q_all
        denom = m * a_count
        l_d = float(huber(diff).sum() / denom)
        if lam != 0.0:
            dq_all -= (lam / denom) * huber_grad(diff)

    total = l_ori + lam * l_d
    if not np.isfinite(total):
        raise TrainingDiverged(
            f"non-finite loss (l_ori={l_ori}, l_d={l_d}, lam={lam})")
    grads = net.backward_from_dq(dq_all, feats)
    return l_ori, l_d, total, grads


class Agent:
    """One learner: value net, target copy, context model, buffers, RNGs."""

    def __init__(self, env, hp: Hyperparams, seed: int):
        hp = normalize_variant(hp)
        self.env = env
        self.hp = hp
        self.seed = int(seed)
        self.action_count = env.spec.action_count

        streams = np.random.SeedSequence(self.seed).spawn(6)
        self.rng_net = np.random.default_rng(streams[0])
        self._encoder_stream = streams[1]
        self.rng_ctx = np.random.default_rng(streams[2])
        self.rng_act = np.random.default_rng(streams[3])
        self.rng_samp = np.random.default_rng(streams[4])
        self.rng_env = np.random.default_rng(streams[5])

        self.net = MultiHeadQNet(layout_for(env.spec, hp.k), self.rng_net,
                                 init_seed=self.seed)
        self.target = self.net.clone(frozen=True)
        self.adam = AdamState(self.net)

        self.codec = (PixelCodec() if env.spec.pixel
                      else VectorCodec(env.spec.state_dim))

        self._mode = self._context_mode(hp.variant)
        self.encoder = None
        self.encoder_seed = None
        if hp.variant == "cdakd_re" and env.spec.pixel:
            self.encoder_seed = int(self._encoder_stream.generate_state(1)[0])
            self.encoder = RandomEncoder(self.encoder_seed, hp.encoder_dim)

        self.ctx = None
        self.gs_edges = None
        if self._mode in ("skm", "is", "rand"):
            self.ctx = ContextModel(hp.k, self._embed_dim())
        elif self._mode == "gs":
            self.gs_edges = score_bin_edges(env.spec.return_range, hp.k)

        self.buffer = ReplayBuffer(hp.buffer_capacity, self.codec.state_shape,
                                   hp.k, self.codec.state_dtype)
        self.recent = RecentBuffer(self.codec.state_shape, hp.k,
                                   hp.recent_capacity, self.codec.state_dtype)

        self._aei_period = (hp.target_period if hp.aei_period is None
                            else hp.aei_period)
        self._needs_emb = self._mode in ("skm", "is", "rand")
        self._use_warm = (hp.warm_start and hp.min_history > 0
                          and self._mode in ("skm", "is", "rand"))
        if self._mode == "is" and not self._use_warm:
            # the initial-state variant has no streaming fallback
            raise UsageError(
                "cdakd_is needs warm_start=true and min_history > 0")
        self._warm_pool = []       # every new observation during warm-up
        self._initial_pool = []    # reset observations during warm-up
        self._stream_seeds = []    # distinct embeds when streaming init is used
        self.warm_start_jittered = False

        self.step_count = 0
        self.centroid_snapshots = []
        self._ep_return = 0.0
        self._obs = None
        self._emb = None
        self._obs_enc = None
        self._reset_episode(collect=True)

    @staticmethod
    def _context_mode(variant: str) -> str:
        return {
            "cdakd": "skm", "no_distill": "skm", "cdakd_re": "skm",
            "cdakd_is": "is", "cdakd_gs": "gs", "no_clustering": "rand",
            "dqn": "none", "single_head": "none",
        }[variant]

    @property
    def distill_mode(self) -> str:
        if self.hp.variant == "single_head":
            return "self"
        if self.hp.variant == "dqn":
            return "off"
        return "multi"

    # ---- embeddings and context assignment -------------------------------

    def _embed_dim(self) -> int:
        if self.encoder is not None:
            return self.encoder.out_dim
        return self.env.spec.state_dim

    def _embed_one(self, obs) -> np.ndarray:
        if self.encoder is not None:
            return self.encoder.encode(obs)
        if self.env.spec.pixel:
            return obs.frames.astype(np.float64).reshape(-1) / 255.0
        return obs

    def _embed_encoded(self, encoded: np.ndarray) -> np.ndarray:
        """Embeddings for a block of buffer-encoded states, chunked."""
        if not self.env.spec.pixel:
            return encoded
        out = []
        for lo in range(0, len(encoded), 64):
            stacks = self.codec.store.stacks(encoded[lo:lo + 64])  # uint8
            if self.encoder is not None:
                out.append(self.encoder.encode(stacks))
            else:
                out.append(
                    stacks.reshape(len(stacks), -1).astype(np.float64) / 255.0)
        return np.concatenate(out, axis=0)

    def _assign(self, emb, score: float, obs) -> int:
        mode = self._mode
        if mode == "none":
            return 0
        if mode == "gs":
            return contextualize_gs(score, self.gs_edges)
        model = self.ctx
        if model is None or not model.initialized:
            return 0
        return model.assign(emb)

    def _run_warm_start(self):
        """Initialize the context model from the warm-up pool and relabel.

        The clustering variants batch-cluster every state seen during
        warm-up; the initial-state variant clusters only reset observations
        and then never moves its centroids again; the random-partition
        variant freezes k randomly drawn pool states as anchors.
        """
        pool = self._initial_pool if self._mode == "is" else self._warm_pool
        if not pool:
            pool = self._warm_pool
        embeds = self._embed_batch_obs(pool)
        build = random_partition if self._mode == "rand" else warm_start
        centroids, counts, jittered = build(embeds, self.hp.k, self.rng_ctx)
        self.warm_start_jittered = jittered
        self.ctx.init_from(centroids, counts)
        self._relabel_buffers()
        self._warm_pool = []
        self._initial_pool = []

    def _embed_batch_obs(self, pool) -> np.ndarray:
        if not self.env.spec.pixel:
            return np.asarray(pool, dtype=np.float64)
        out = []
        for lo in range(0, len(pool), 64):
            stacks = np.stack([o.frames for o in pool[lo:lo + 64]])
            if self.encoder is not None:
                out.append(self.encoder.encode(stacks))
            else:
                out.append(
                    stacks.reshape(len(stacks), -1).astype(np.float64) / 255.0)
        return np.concatenate(out, axis=0)

    def _relabel_buffers(self):
        def fn(encoded):
            return self.ctx.assign_batch(self._embed_encoded(encoded))

        self.buffer.relabel(fn)
        self.recent.relabel(fn)

    def _maybe_stream_init(self, emb):
        """Centroid bootstrap from the first k distinct states (no warm start)."""
        if any(np.array_equal(emb, seen) for seen in self._stream_seeds):
            return
        self._stream_seeds.append(np.array(emb, dtype=np.float64))
        if len(self._stream_seeds) == self.hp.k:
            seeds = np.stack(self._stream_seeds)
            self.ctx.init_from(seeds, np.ones(self.hp.k, dtype=np.int64))
            self._stream_seeds = []
            self._relabel_buffers()

    # ---- episode plumbing -------------------------------------------------

    def _reset_episode(self, collect: bool):
        ep_seed = int(self.rng_env.integers(0, 2 ** 63))
        obs = self.env.reset(ep_seed)
        self._obs = obs
        self._emb = self._embed_one(obs) if self._needs_emb else None
        self._obs_enc = self.codec.encode(obs)
        self._ep_return = 0.0
        if collect and self._use_warm and not self._warm_done():
            self._warm_pool.append(obs)
            self._initial_pool.append(obs)
        elif (collect and self._mode in ("skm", "rand") and not self._use_warm
              and not self.ctx.initialized):
            self._maybe_stream_init(self._emb)

    def _warm_done(self) -> bool:
        return self.ctx is None or self.ctx.initialized

    # ---- acting and learning ----------------------------------------------

    def _net_input(self, obs):
        if self.env.spec.pixel:
            return obs.frames.astype(np.float64) / 255.0
        return obs

    def _greedy_action(self, obs, w: int) -> int:
        q = self.net.forward(self._net_input(obs), w)
        return int(q.argmax())

    def select_action(self, obs, score: float = 0.0) -> int:
        """Behavior-policy action for an observation. Consumes action RNG."""
        emb = self._embed_one(obs) if self._needs_emb else None
        w = self._assign(emb, score, obs)
        if self.step_count < self.hp.min_history:
            return int(self.rng_act.integers(self.action_count))
        eps = epsilon_at(self.step_count, self.hp)
        if self.rng_act.random() < eps:
            return int(self.rng_act.integers(self.action_count))
        return self._greedy_action(obs, w)

    def decode_batch(self, batch: Batch) -> Batch:
        """Materialize stored state codes into network-ready float arrays."""
        return Batch(
            s=self.codec.decode_batch(batch.s), w_s=batch.w_s, a=batch.a,
            r=batch.r, s_next=self.codec.decode_batch(batch.s_next),
            w_s_next=batch.w_s_next, done=batch.done)

    def compute_loss(self, batch: Batch, lam: float):
        """(l_ori, l_d, total, grads) for a stored-format batch."""
        return joint_loss_and_grads(self.net, self.target,
                                    self.decode_batch(batch), self.hp.gamma,
                                    lam, self.distill_mode)

    def td_loss_on(self, batch: Batch) -> float:
        """Mean Huber TD loss on a stored-format batch, no gradients."""
        deltas = bellman_deltas(self.net, self.target,
                                self.decode_batch(batch), self.hp.gamma)
        return float(np.mean(huber(deltas)))

    def sample_context_batch(self, w: int, m: int | None = None) -> Batch:
        """Uniform batch (with replacement) among transitions labeled w."""
        slots = self.buffer.slots_with_context(w)
        if len(slots) == 0:
            raise UsageError(f"no stored transitions with context {w}")
        m = self.hp.batch_size if m is None else m
        picked = slots[self.rng_samp.integers(0, len(slots), size=m)]
        return self.buffer.gather(picked)

    def focused_update(self, batch: Batch):
        """One TD-only optimizer step on a fixed batch (no distillation)."""
        _, _, _, grads = joint_loss_and_grads(
            self.net, self.target, self.decode_batch(batch), self.hp.gamma,
            0.0, "off")
        adam_step(self.net, grads, self.hp.learning_rate, self.adam)

    def train_step(self) -> StepMetrics:
        """One environment interaction plus whatever learning it triggers."""
        hp = self.hp
        t = self.step_count + 1
        obs, emb = self._obs, self._emb
        score = self._ep_return
        w = self._assign(emb, score, obs)
        eps = epsilon_at(t - 1, hp)

        if t <= hp.min_history:
            a = int(self.rng_act.integers(self.action_count))
        elif self.rng_act.random() < eps:
            a = int(self.rng_act.integers(self.action_count))
        else:
            a = self._greedy_action(obs, w)

        res = self.env.step(a)
        obs2 = res.next_state
        emb2 = self._embed_one(obs2) if self._needs_emb else None
        score2 = score + res.reward
        w2 = self._assign(emb2, score2, obs2)

        enc2 = self.codec.encode(obs2)
        # horizon cuts count as terminal for the stored flag, so targets never
        # bootstrap across an episode boundary of either kind
        tr = Transition(self._obs_enc, w, a, res.reward, enc2, w2,
                        res.done or res.truncated)
        self.buffer.push(tr)
        self.recent.push(tr)

        if self._mode == "skm" and self.ctx.initialized:
            self.ctx.skm_update(emb)

        if self._use_warm and not self._warm_done():
            self._warm_pool.append(obs2)
            if t == hp.min_history:
                self._run_warm_start()
        elif (self._mode in ("skm", "rand") and not self.ctx.initialized
              and not self._use_warm):
            self._maybe_stream_init(emb2)

        loss_ori = loss_d = loss = aei_val = None
        lam = lambda_at(eps, hp)
        if t >= hp.min_history and len(self.buffer) > 0:
            batch = self.buffer.sample(hp.batch_size, self.rng_samp)
            aei_due = self._aei_period > 0 and t % self._aei_period == 0
            net_before = self.net.clone() if aei_due else None
            loss_ori, loss_d, loss, grads = self.compute_loss(batch, lam)
            adam_step(self.net, grads, hp.learning_rate, self.adam)
            if aei_due:
                aei_val = metrics.aei(net_before, self.net, self.recent,
                                      hp.gamma, decode=self.decode_batch)

        synced = t % hp.target_period == 0
        if synced:
            self.target = self.net.clone(frozen=True)
            if self._mode == "skm" and self.ctx.initialized:
                self.ctx.sync_targets()
            self._snapshot_centroids(t)

        episode_return = None
        self._ep_return = score2
        finished = res.done or res.truncated
        if finished:
            episode_return = score2
            self._reset_episode(collect=True)
        else:
            self._obs, self._emb, self._obs_enc = obs2, emb2, enc2

        self.step_count = t
        return StepMetrics(
            step=t, action=a, reward=res.reward, done=res.done,
            episode_return=episode_return, loss_ori=loss_ori,
            loss_distill=loss_d, loss=loss, aei=aei_val, epsilon=eps,
            lam=lam, synced=synced)

    def _snapshot_centroids(self, step: int):
        if self.ctx is None or not self.ctx.initialized:
            return
        for i in range(self.hp.k):
            self.centroid_snapshots.append(
                (step, i, int(self.ctx.counts[i]),
                 self.ctx.centroids[i].copy()))


def make_variant(env, hp: Hyperparams, seed: int) -> Agent:
    """Build an agent for any supported variant name."""
    if hp.variant not in VARIANTS:
        raise UsageError(f"unknown variant {hp.variant!r}")
    return Agent(env, hp, seed)


# ---- agent checkpoints -----------------------------------------------------

def _rng_state(rng) -> dict:
    return rng.bit_generator.state


def _stack_obs(pool) -> np.ndarray:
    if hasattr(pool[0], "frames"):
        return np.stack([o.frames for o in pool])
    return np.stack(pool)


def _unstack_obs(block, env) -> list:
    if block is None:
        return []
    if env.spec.pixel:
        return [PixelObservation(frames) for frames in block]
    return list(block)


def save_agent(path, agent: Agent):
    """Serialize full learning state: nets, moments, buffers, context, RNGs.

    The environment itself is not captured; a loaded agent starts a fresh
    episode using its restored episode-seed stream.
    """
    meta = {
        "format": "contextrl-agent-v1",
        "env": agent.env.spec.name,
        "seed": agent.seed,
        "hp": dataclasses.asdict(agent.hp),
        "step_count": agent.step_count,
        "adam_t": agent.adam.t,
        "encoder_seed": agent.encoder_seed,
        "warm_start_jittered": agent.warm_start_jittered,
        "rng": {
            "ctx": _rng_state(agent.rng_ctx),
            "act": _rng_state(agent.rng_act),
            "samp": _rng_state(agent.rng_samp),
            "env": _rng_state(agent.rng_env),
        },
        "buffer": {k: v for k, v in agent.buffer.state_dict().items()
                   if np.isscalar(v)},
        "recent": {k: v for k, v in agent.recent.state_dict().items()
                   if np.isscalar(v)},
        "ctx_initialized": agent.ctx is not None and agent.ctx.initialized,
    }
    arrays = {}
    for idx, (_, arr) in enumerate(agent.net.param_items()):
        arrays[f"p{idx:03d}"] = arr
    for idx, (_, arr) in enumerate(agent.target.param_items()):
        arrays[f"t{idx:03d}"] = arr
    for idx, (name, _) in enumerate(agent.net.param_items()):
        arrays[f"m{idx:03d}"] = agent.adam.m[name]
        arrays[f"v{idx:03d}"] = agent.adam.v[name]
    for col, arr in agent.buffer.state_dict().items():
        if not np.isscalar(arr):
            arrays[f"buf_{col}"] = arr
    for col, arr in agent.recent.state_dict().items():
        if not np.isscalar(arr):
            arrays[f"rec_{col}"] = arr
    if agent.ctx is not None and agent.ctx.initialized:
        arrays["ctx_centroids"] = agent.ctx.centroids
        arrays["ctx_targets"] = agent.ctx.target_centroids
        arrays["ctx_counts"] = agent.ctx.counts
    if agent._warm_pool:
        arrays["warm_pool"] = _stack_obs(agent._warm_pool)
    if agent._initial_pool:
        arrays["warm_initial"] = _stack_obs(agent._initial_pool)
    if agent._stream_seeds:
        arrays["stream_seeds"] = np.stack(agent._stream_seeds)
    if agent.env.spec.pixel:
        arrays["frames"] = agent.codec.store.state_dict()["frames"]
    with open(path, "wb") as fh:
        np.savez(fh,
                 meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)


def load_agent(path, env=None) -> Agent:
    """Rebuild an agent from a checkpoint. Starts a fresh episode."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != "contextrl-agent-v1":
            raise UsageError(f"{path} is not an agent checkpoint")
        arrays = {key: data[key] for key in data.files if key != "meta"}

    if env is None:
        env = make(meta["env"])
    elif env.spec.name != meta["env"]:
        raise UsageError(
            f"checkpoint is for {meta['env']}, got env {env.spec.name}")

    hp = Hyperparams(**meta["hp"])
    agent = Agent(env, hp, meta["seed"])

    names = [name for name, _ in agent.net.param_items()]
    agent.net.load_param_dict(
        {name: arrays[f"p{idx:03d}"] for idx, name in enumerate(names)})
    agent.target.load_param_dict(
        {name: arrays[f"t{idx:03d}"] for idx, name in enumerate(names)})
    agent.adam.t = int(meta["adam_t"])
    for idx, name in enumerate(names):
        agent.adam.m[name][...] = arrays[f"m{idx:03d}"]
        agent.adam.v[name][...] = arrays[f"v{idx:03d}"]

    if agent.env.spec.pixel:
        agent.codec.store.load_state_dict({"frames": arrays["frames"]})

    buf_state = dict(meta["buffer"])
    for col in ("s", "s2", "w", "w2", "a", "r", "done"):
        buf_state[col] = arrays[f"buf_{col}"]
    agent.buffer.load_state_dict(buf_state)
    rec_state = dict(meta["recent"])
    for col in ("s", "s2", "w", "w2", "a", "r", "done"):
        rec_state[col] = arrays[f"rec_{col}"]
    agent.recent.load_state_dict(rec_state)

    if meta["ctx_initialized"]:
        agent.ctx.init_from(arrays["ctx_centroids"], arrays["ctx_counts"])
        agent.ctx.target_centroids = arrays["ctx_targets"].copy()
    agent._warm_pool = _unstack_obs(arrays.get("warm_pool"), env)
    agent._initial_pool = _unstack_obs(arrays.get("warm_initial"), env)
    agent._stream_seeds = (list(arrays["stream_seeds"])
                           if "stream_seeds" in arrays else [])
    agent.warm_start_jittered = bool(meta["warm_start_jittered"])
    agent.step_count = int(meta["step_count"])

    agent.rng_ctx.bit_generator.state = meta["rng"]["ctx"]
    agent.rng_act.bit_generator.state = meta["rng"]["act"]
    agent.rng_samp.bit_generator.state = meta["rng"]["samp"]
    agent.rng_env.bit_generator.state = meta["rng"]["env"]
    agent._reset_episode(collect=False)
    return agent
