"""From-scratch network kernel: float64 forward/backward, Adam, checkpoints.

Layers keep their forward caches internally, so the usual pattern is
forward(..., cache=True) followed by one backward pass that fills a flat
{parameter name: gradient array} dict. Everything is exact reverse-mode
differentiation; correctness is pinned by central-difference checks in the
test suite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import UsageError, TrainingDiverged


def fan_in_uniform(rng, shape, fan_in) -> np.ndarray:
    """Uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)] in float64."""
    limit = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-limit, limit, size=shape)


def huber(delta, kappa: float = 1.0):
    """Huber penalty: 0.5*d^2 inside |d| <= kappa, kappa*(|d| - kappa/2) outside."""
    if kappa <= 0:
        raise UsageError(f"huber kappa must be positive, got {kappa}")
    d = np.abs(np.asarray(delta, dtype=np.float64))
    out = np.where(d <= kappa, 0.5 * d * d, kappa * (d - 0.5 * kappa))
    return float(out) if out.ndim == 0 else out


def huber_grad(delta, kappa: float = 1.0):
    """Derivative of huber with respect to delta (clipped identity)."""
    if kappa <= 0:
        raise UsageError(f"huber kappa must be positive, got {kappa}")
    d = np.asarray(delta, dtype=np.float64)
    out = np.clip(d, -kappa, kappa)
    return float(out) if out.ndim == 0 else out


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng=None):
        if rng is None:
            self.W = np.zeros((in_dim, out_dim))
            self.b = np.zeros(out_dim)
        else:
            self.W = fan_in_uniform(rng, (in_dim, out_dim), in_dim)
            self.b = fan_in_uniform(rng, (out_dim,), in_dim)
        self._x = None

    def forward(self, x, cache=False):
        if cache:
            self._x = x
        return x @ self.W + self.b

    def backward(self, dy, grads, prefix):
        if self._x is None:
            raise UsageError("Dense.backward without a cached forward pass")
        grads[prefix + "W"] = self._x.T @ dy
        grads[prefix + "b"] = dy.sum(axis=0)
        return dy @ self.W.T

    def param_items(self, prefix):
        return [(prefix + "W", self.W), (prefix + "b", self.b)]


class Tanh:
    def __init__(self):
        self._y = None

    def forward(self, x, cache=False):
        y = np.tanh(x)
        if cache:
            self._y = y
        return y

    def backward(self, dy, grads, prefix):
        if self._y is None:
            raise UsageError("Tanh.backward without a cached forward pass")
        return dy * (1.0 - self._y * self._y)

    def param_items(self, prefix):
        return []


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, cache=False):
        y = np.maximum(x, 0.0)
        if cache:
            self._mask = x > 0.0
        return y

    def backward(self, dy, grads, prefix):
        if self._mask is None:
            raise UsageError("ReLU.backward without a cached forward pass")
        return dy * self._mask

    def param_items(self, prefix):
        return []


class Flatten:
    def __init__(self):
        self._shape = None

    def forward(self, x, cache=False):
        if cache:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, grads, prefix):
        if self._shape is None:
            raise UsageError("Flatten.backward without a cached forward pass")
        return dy.reshape(self._shape)

    def param_items(self, prefix):
        return []


class Conv2D:
    """Valid (no padding) strided convolution over NHWC float arrays."""

    def __init__(self, in_ch, out_ch, ksize, stride, rng=None):
        fan_in = ksize * ksize * in_ch
        if rng is None:
            self.W = np.zeros((ksize, ksize, in_ch, out_ch))
            self.b = np.zeros(out_ch)
        else:
            self.W = fan_in_uniform(rng, (ksize, ksize, in_ch, out_ch), fan_in)
            self.b = fan_in_uniform(rng, (out_ch,), fan_in)
        self.ksize = ksize
        self.stride = stride
        self._cols = None
        self._xshape = None

    def _im2col(self, x):
        n, h, w, c = x.shape
        k, s = self.ksize, self.stride
        oh = (h - k) // s + 1
        ow = (w - k) // s + 1
        if oh < 1 or ow < 1:
            raise UsageError(
                f"Conv2D: input {h}x{w} too small for kernel {k} stride {s}")
        cols = np.empty((n, oh, ow, k, k, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = x[:, i:i + s * oh:s, j:j + s * ow:s, :]
        return cols.reshape(n, oh, ow, k * k * c), oh, ow

    def forward(self, x, cache=False):
        cols, oh, ow = self._im2col(x)
        out_ch = self.W.shape[-1]
        y = cols @ self.W.reshape(-1, out_ch) + self.b
        if cache:
            self._cols = cols
            self._xshape = x.shape
        return y

    def backward(self, dy, grads, prefix):
        if self._cols is None:
            raise UsageError("Conv2D.backward without a cached forward pass")
        n, oh, ow, out_ch = dy.shape
        k, s = self.ksize, self.stride
        kkc = self._cols.shape[-1]
        dy_flat = dy.reshape(-1, out_ch)
        grads[prefix + "W"] = (
            self._cols.reshape(-1, kkc).T @ dy_flat).reshape(self.W.shape)
        grads[prefix + "b"] = dy_flat.sum(axis=0)
        dcols = (dy_flat @ self.W.reshape(-1, out_ch).T).reshape(
            n, oh, ow, k, k, self._xshape[-1])
        dx = np.zeros(self._xshape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, i:i + s * oh:s, j:j + s * ow:s, :] += dcols[:, :, :, i, j, :]
        return dx

    def param_items(self, prefix):
        return [(prefix + "W", self.W), (prefix + "b", self.b)]


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, cache=False):
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        return x

    def backward(self, dy, grads, prefix):
        for idx in range(len(self.layers) - 1, -1, -1):
            dy = self.layers[idx].backward(dy, grads, f"{prefix}{idx}.")
        return dy

    def param_items(self, prefix):
        items = []
        for idx, layer in enumerate(self.layers):
            items.extend(layer.param_items(f"{prefix}{idx}."))
        return items


@dataclass(frozen=True)
class Layout:
    """Shape descriptor for a value network.

    kind "dense": trunk is one 64-unit tanh layer over a flat state vector.
    kind "conv": trunk is the three-conv stack over stacked 84x84 frames
    followed by a 512-unit ReLU layer. Either trunk feeds `heads` linear
    output blocks of `action_count` units each.
    """

    kind: str
    state_dim: int
    action_count: int
    heads: int
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise UsageError(f"unknown layout kind {self.kind!r}")
        if self.heads < 1:
            raise UsageError(f"head count must be at least 1, got {self.heads}")
        if self.action_count < 1 or self.state_dim < 1:
            raise UsageError("state_dim and action_count must be at least 1")
        if self.hidden == 0:
            object.__setattr__(
                self, "hidden", 64 if self.kind == "dense" else 512)


CONV_STACK = ((4, 32, 8, 4), (32, 64, 4, 2), (64, 64, 3, 1))
CONV_FLAT = 64 * 7 * 7  # 84 -> 20 -> 9 -> 7 spatial under the stack above


def _build_trunk(layout: Layout, rng) -> Sequential:
    if layout.kind == "dense":
        return Sequential([Dense(layout.state_dim, layout.hidden, rng), Tanh()])
    layers = []
    for in_ch, out_ch, ksize, stride in CONV_STACK:
        layers.append(Conv2D(in_ch, out_ch, ksize, stride, rng))
        layers.append(ReLU())
    layers.append(Flatten())
    layers.append(Dense(CONV_FLAT, layout.hidden, rng))
    layers.append(ReLU())
    return Sequential(layers)


class MultiHeadQNet:
    """Shared trunk with `heads` parallel linear action-value blocks.

    Head j occupies columns [j*A, (j+1)*A) of the packed head matrix, so a
    single matmul evaluates every head at once while gradients still resolve
    per head.
    """

    def __init__(self, layout: Layout, rng=None, init_seed=None):
        self.layout = layout
        self.init_seed = init_seed
        self.trunk = _build_trunk(layout, rng)
        h, a, k = layout.hidden, layout.action_count, layout.heads
        if rng is None:
            self.head_W = np.zeros((h, k * a))
            self.head_b = np.zeros(k * a)
        else:
            self.head_W = fan_in_uniform(rng, (h, k * a), h)
            self.head_b = fan_in_uniform(rng, (k * a,), h)
        self._feat_cached = False

    @property
    def k(self) -> int:
        return self.layout.heads

    @property
    def action_count(self) -> int:
        return self.layout.action_count

    def _check_input(self, x):
        if self.layout.kind == "dense":
            if x.shape[-1] != self.layout.state_dim:
                raise UsageError(
                    f"state dim {x.shape[-1]} does not match "
                    f"layout dim {self.layout.state_dim}")
        else:
            if x.shape[-3:] != (84, 84, 4):
                raise UsageError(
                    f"pixel input must end in (84, 84, 4), got {x.shape}")

    def features(self, x, cache=False) -> np.ndarray:
        self._check_input(x)
        if cache:
            self._feat_cached = True
        return self.trunk.forward(x, cache=cache)

    def q_all(self, feats) -> np.ndarray:
        """Action values for every head, shape (batch, k, A)."""
        out = feats @ self.head_W + self.head_b
        return out.reshape(out.shape[0], self.k, self.action_count)

    def forward(self, x, head: int) -> np.ndarray:
        """Action values under one head; accepts a single state or a batch."""
        if not (0 <= head < self.k):
            raise UsageError(f"head {head} outside [0, {self.k})")
        single = (x.ndim == 1) if self.layout.kind == "dense" else (x.ndim == 3)
        xb = x[None] if single else x
        feats = self.features(xb, cache=False)
        a = self.action_count
        block = slice(head * a, (head + 1) * a)
        q = feats @ self.head_W[:, block] + self.head_b[block]
        return q[0] if single else q

    def backward_from_dq(self, dq_all, feats) -> dict:
        """Backprop d(loss)/d(q_all) through heads and trunk.

        Returns a flat gradient dict covering every trainable parameter.
        """
        if not self._feat_cached:
            raise UsageError("backward_from_dq without a cached forward pass")
        grads = {}
        m = dq_all.shape[0]
        dq = dq_all.reshape(m, self.k * self.action_count)
        grads["heads.W"] = feats.T @ dq
        grads["heads.b"] = dq.sum(axis=0)
        dfeats = dq @ self.head_W.T
        self.trunk.backward(dfeats, grads, "trunk.")
        self._feat_cached = False
        return grads

    def param_items(self) -> list:
        items = self.trunk.param_items("trunk.")
        items.append(("heads.W", self.head_W))
        items.append(("heads.b", self.head_b))
        return items

    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.param_items())

    def clone(self, frozen=False) -> "MultiHeadQNet":
        other = MultiHeadQNet(self.layout, rng=None, init_seed=self.init_seed)
        src = dict(self.param_items())
        for name, arr in other.param_items():
            arr.setflags(write=True)
            arr[...] = src[name]
            if frozen:
                arr.setflags(write=False)
        return other

    def load_param_dict(self, values: dict):
        for name, arr in self.param_items():
            writable = arr.flags.writeable
            arr.setflags(write=True)
            arr[...] = values[name]
            arr.setflags(write=writable)


def layout_for(env_spec, heads: int) -> Layout:
    kind = "conv" if env_spec.pixel else "dense"
    return Layout(kind=kind, state_dim=env_spec.state_dim,
                  action_count=env_spec.action_count, heads=heads)


class AdamState:
    """First and second moment accumulators, one pair per parameter."""

    def __init__(self, net: MultiHeadQNet):
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in net.param_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in net.param_items()}


def adam_step(net, grads: dict, lr: float, state: AdamState,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update in place. Non-finite gradients abort the run."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, arr in net.param_items():
        g = grads[name]
        # a non-finite value anywhere poisons the sum, so this is a full check
        if not np.isfinite(g.sum()):
            raise TrainingDiverged(
                f"non-finite gradient in {name} at optimizer step {state.t}")
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def gradient_check(net, loss_fn, eps: float = 1e-5,
                   max_entries_per_param: int = 8, rng=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    loss_fn(net) must return (scalar loss, gradient dict). Differences below
    1e-7 are treated as zero to absorb finite-difference noise.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = loss_fn(net)
    worst = 0.0
    for name, arr in net.param_items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        n = flat.size
        if n <= max_entries_per_param:
            idxs = np.arange(n)
        else:
            idxs = rng.choice(n, size=max_entries_per_param, replace=False)
        for idx in idxs:
            keep = flat[idx]
            flat[idx] = keep + eps
            up, _ = loss_fn(net)
            flat[idx] = keep - eps
            down, _ = loss_fn(net)
            flat[idx] = keep
            numeric = (up - down) / (2.0 * eps)
            diff = abs(numeric - gflat[idx])
            if diff > 1e-7:
                denom = max(abs(numeric), abs(gflat[idx]), 1e-12)
                worst = max(worst, diff / denom)
    return worst


class RandomEncoder:
    """Frozen random conv embedding of pixel observations.

    Same conv stack as the value trunk plus one linear projection to out_dim.
    Parameters are drawn once from the given seed and then marked read-only;
    nothing ever trains this network.
    """

    def __init__(self, seed: int, out_dim: int = 50):
        if out_dim < 1:
            raise UsageError(f"encoder out_dim must be positive, got {out_dim}")
        rng = np.random.default_rng(seed)
        layers = []
        for in_ch, out_ch, ksize, stride in CONV_STACK:
            layers.append(Conv2D(in_ch, out_ch, ksize, stride, rng))
            layers.append(ReLU())
        layers.append(Flatten())
        layers.append(Dense(CONV_FLAT, out_dim, rng))
        self._net = Sequential(layers)
        for _, arr in self._net.param_items(""):
            arr.setflags(write=False)
        self.seed = seed
        self.out_dim = out_dim

    def encode(self, obs) -> np.ndarray:
        frames = getattr(obs, "frames", obs)
        frames = np.asarray(frames)
        if frames.shape[-3:] != (84, 84, 4):
            raise UsageError(
                f"encoder input must end in (84, 84, 4), got {frames.shape}")
        single = frames.ndim == 3
        x = frames.astype(np.float64) / 255.0
        if single:
            x = x[None]
        y = self._net.forward(x, cache=False)
        return y[0] if single else y

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, arr in self._net.param_items(""):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()


def save_net(path, net: MultiHeadQNet):
    """Write layout, parameter arrays in declaration order, and init seed."""
    names = [name for name, _ in net.param_items()]
    meta = {
        "format": "contextrl-net-v1",
        "layout": asdict(net.layout),
        "param_names": names,
        "init_seed": net.init_seed,
    }
    arrays = {f"p{idx:03d}": arr for idx, (_, arr) in enumerate(net.param_items())}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)


def load_net(path) -> MultiHeadQNet:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != "contextrl-net-v1":
            raise UsageError(f"{path} is not a network checkpoint")
        layout = Layout(**meta["layout"])
        net = MultiHeadQNet(layout, rng=None, init_seed=meta["init_seed"])
        values = {
            name: data[f"p{idx:03d}"]
            for idx, name in enumerate(meta["param_names"])
        }
    net.load_param_dict(values)
    return net
