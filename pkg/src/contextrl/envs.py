"""Classic-control tasks and a synthetic pixel task behind one reset/step interface.

Every environment owns a numpy Generator that is reseeded on reset, so a
trajectory is a pure function of (seed, action sequence). Physics constants
are fixed; there are no configuration knobs on the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class EnvSpec:
    """Static facts about an environment.

    return_range is (floor, ceiling): the worst and best undiscounted episode
    return used for score binning and deterioration floors.
    """

    name: str
    state_dim: int
    action_count: int
    max_steps: int
    reward_threshold: float | None
    return_range: tuple[float, float]
    pixel: bool = False


@dataclass
class StepResult:
    next_state: object
    reward: float
    done: bool        # termination rule fired
    truncated: bool   # horizon reached


@dataclass(frozen=True)
class PixelObservation:
    """Stack of the four most recent 84x84 grayscale frames, oldest first."""

    frames: np.ndarray  # (84, 84, 4) uint8


class _EnvBase:
    """Reset/step bookkeeping shared by all tasks."""

    spec: EnvSpec

    def __init__(self):
        self._rng = None
        self._t = 0
        self._finished = True

    def _begin(self, seed):
        self._rng = np.random.default_rng(seed)
        self._t = 0
        self._finished = False

    def _check_step(self, action):
        if self._rng is None:
            raise UsageError(f"{self.spec.name}: step before reset")
        if self._finished:
            raise UsageError(f"{self.spec.name}: episode finished, call reset")
        if not (0 <= int(action) < self.spec.action_count):
            raise UsageError(
                f"{self.spec.name}: action {action!r} outside "
                f"[0, {self.spec.action_count})")

    def _wrap_up(self, done: bool) -> tuple[bool, bool]:
        self._t += 1
        truncated = self._t >= self.spec.max_steps
        self._finished = done or truncated
        return done, truncated

    def render_pixels(self):
        raise UsageError(f"{self.spec.name} has no pixel renderer")


class CartPole(_EnvBase):
    """Pole balancing on a force-controlled cart.

    Semi-implicit Euler at tau=0.02: the position variables are advanced with
    the pre-update velocities, then the velocities are advanced with the
    accelerations computed from the pre-update state. Reward is 1.0 every
    step, including the terminating one.
    """

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    TOTAL_MASS = MASS_CART + MASS_POLE
    HALF_LENGTH = 0.5
    POLEMASS_LENGTH = MASS_POLE * HALF_LENGTH
    FORCE_MAG = 10.0
    TAU = 0.02
    X_LIMIT = 2.4
    THETA_LIMIT = 0.2094395  # roughly 12 degrees

    def __init__(self, version: int = 0):
        super().__init__()
        if version == 0:
            max_steps, threshold = 200, 195.0
        elif version == 1:
            max_steps, threshold = 500, 475.0
        else:
            raise UsageError(f"cartpole version must be 0 or 1, got {version}")
        self.spec = EnvSpec(
            name=f"cartpole-v{version}",
            state_dim=4,
            action_count=2,
            max_steps=max_steps,
            reward_threshold=threshold,
            return_range=(0.0, float(max_steps)),
        )
        self._x = self._x_dot = self._theta = self._theta_dot = 0.0

    def reset(self, seed) -> np.ndarray:
        self._begin(seed)
        self._x, self._x_dot, self._theta, self._theta_dot = self._rng.uniform(
            -0.05, 0.05, size=4)
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array(
            [self._x, self._x_dot, self._theta, self._theta_dot], dtype=np.float64)

    def step(self, action) -> StepResult:
        self._check_step(action)
        force = self.FORCE_MAG if action == 1 else -self.FORCE_MAG
        cos_t = math.cos(self._theta)
        sin_t = math.sin(self._theta)

        temp = (force + self.POLEMASS_LENGTH * self._theta_dot ** 2 * sin_t) \
            / self.TOTAL_MASS
        theta_acc = (self.GRAVITY * sin_t - cos_t * temp) / (
            self.HALF_LENGTH
            * (4.0 / 3.0 - self.MASS_POLE * cos_t ** 2 / self.TOTAL_MASS))
        x_acc = temp - self.POLEMASS_LENGTH * theta_acc * cos_t / self.TOTAL_MASS

        self._x += self.TAU * self._x_dot
        self._x_dot += self.TAU * x_acc
        self._theta += self.TAU * self._theta_dot
        self._theta_dot += self.TAU * theta_acc

        done = (abs(self._x) > self.X_LIMIT
                or abs(self._theta) > self.THETA_LIMIT)
        done, truncated = self._wrap_up(done)
        return StepResult(self._obs(), 1.0, done, truncated)


class Pendulum(_EnvBase):
    """Torque-controlled pendulum swing-up with a discretized torque grid.

    Nine evenly spaced torques in [-2, 2]. Reward is
    -(theta^2 + 0.1*omega^2 + 0.001*u^2) with theta wrapped to [-pi, pi].
    Episodes never terminate early; they end only by truncation at 200 steps.
    """

    GRAVITY = 10.0
    MASS = 1.0
    LENGTH = 1.0
    DT = 0.05
    MAX_SPEED = 8.0
    TORQUES = np.linspace(-2.0, 2.0, 9)

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            name="pendulum-v0",
            state_dim=3,
            action_count=9,
            max_steps=200,
            reward_threshold=None,
            return_range=(-2000.0, 0.0),
        )
        self._th = 0.0
        self._thdot = 0.0

    def reset(self, seed) -> np.ndarray:
        self._begin(seed)
        self._th = self._rng.uniform(-math.pi, math.pi)
        self._thdot = self._rng.uniform(-1.0, 1.0)
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array(
            [math.cos(self._th), math.sin(self._th), self._thdot],
            dtype=np.float64)

    def step(self, action) -> StepResult:
        self._check_step(action)
        u = float(self.TORQUES[int(action)])
        g, m, length, dt = self.GRAVITY, self.MASS, self.LENGTH, self.DT

        th_norm = _angle_normalize(self._th)
        cost = th_norm ** 2 + 0.1 * self._thdot ** 2 + 0.001 * u ** 2

        newthdot = self._thdot + (
            3.0 * g / (2.0 * length) * math.sin(self._th)
            + 3.0 / (m * length ** 2) * u) * dt
        newthdot = min(max(newthdot, -self.MAX_SPEED), self.MAX_SPEED)
        self._th = self._th + newthdot * dt
        self._thdot = newthdot

        done, truncated = self._wrap_up(False)
        return StepResult(self._obs(), -cost, done, truncated)


def _angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


def _acrobot_dynamics(state, torque):
    """Time derivative of the two-link underactuated swing-up system."""
    m1 = m2 = 1.0
    l1 = 1.0
    lc1 = lc2 = 0.5
    i1 = i2 = 1.0
    g = 9.8
    theta1, theta2, dtheta1, dtheta2 = state

    d1 = (m1 * lc1 ** 2
          + m2 * (l1 ** 2 + lc2 ** 2 + 2.0 * l1 * lc2 * math.cos(theta2))
          + i1 + i2)
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * math.sin(theta2)
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2.0)
            + phi2)
    ddtheta2 = (torque + d2 / d1 * phi1
                - m2 * l1 * lc2 * dtheta1 ** 2 * math.sin(theta2)
                - phi2) / (m2 * lc2 ** 2 + i2 - d2 ** 2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2])


class Acrobot(_EnvBase):
    """Two-link swing-up integrated with one fourth-order Runge-Kutta step.

    Torque on the second joint is one of {-1, 0, +1}. The goal test is
    -cos(theta1) - cos(theta1 + theta2) > 1. Reward is -1 per step and 0 on
    the step that reaches the goal.
    """

    DT = 0.2
    TORQUES = (-1.0, 0.0, 1.0)
    MAX_VEL_1 = 4.0 * math.pi
    MAX_VEL_2 = 9.0 * math.pi

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            name="acrobot-v1",
            state_dim=6,
            action_count=3,
            max_steps=500,
            reward_threshold=-100.0,
            return_range=(-500.0, 0.0),
        )
        self._state = np.zeros(4)

    def reset(self, seed) -> np.ndarray:
        self._begin(seed)
        self._state = self._rng.uniform(-0.1, 0.1, size=4)
        return self._obs()

    def _obs(self) -> np.ndarray:
        t1, t2, dt1, dt2 = self._state
        return np.array(
            [math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), dt1, dt2],
            dtype=np.float64)

    def step(self, action) -> StepResult:
        self._check_step(action)
        torque = self.TORQUES[int(action)]

        y0 = self._state
        dt = self.DT
        k1 = _acrobot_dynamics(y0, torque)
        k2 = _acrobot_dynamics(y0 + dt / 2.0 * k1, torque)
        k3 = _acrobot_dynamics(y0 + dt / 2.0 * k2, torque)
        k4 = _acrobot_dynamics(y0 + dt * k3, torque)
        ns = y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        ns[0] = _angle_normalize(ns[0])
        ns[1] = _angle_normalize(ns[1])
        ns[2] = min(max(ns[2], -self.MAX_VEL_1), self.MAX_VEL_1)
        ns[3] = min(max(ns[3], -self.MAX_VEL_2), self.MAX_VEL_2)
        self._state = ns

        done = bool(-math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0)
        reward = 0.0 if done else -1.0
        done, truncated = self._wrap_up(done)
        return StepResult(self._obs(), reward, done, truncated)


class PixelGrid(_EnvBase):
    """Agent-on-a-grid task observed only through stacked grayscale frames.

    An 8x8 grid rendered to 84x84: background 0, goal block 128, agent block
    255 (the agent occludes the goal when both share a cell). The observation
    is the four most recent frames; at reset all four slots hold the initial
    frame. Reward is -0.01 per step and +1.0 on the step that reaches the
    goal. Start cell is uniform over the 63 non-goal cells.
    """

    SIZE = 8
    GOAL = (7, 7)
    FRAME = 84
    MAX_STEPS = 100
    # cell i covers pixel rows/cols [EDGES[i], EDGES[i+1])
    EDGES = tuple(int(round(i * 84 / 8)) for i in range(9))
    # action: 0 up, 1 down, 2 left, 3 right
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            name="pixelgrid",
            state_dim=84 * 84 * 4,
            action_count=4,
            max_steps=self.MAX_STEPS,
            reward_threshold=None,
            return_range=(-1.0, 1.0),
            pixel=True,
        )
        self._agent = (0, 0)
        self._stack = np.zeros((self.FRAME, self.FRAME, 4), dtype=np.uint8)

    @property
    def agent_cell(self) -> tuple[int, int]:
        return self._agent

    @property
    def goal_cell(self) -> tuple[int, int]:
        return self.GOAL

    def _render_frame(self) -> np.ndarray:
        frame = np.zeros((self.FRAME, self.FRAME), dtype=np.uint8)
        e = self.EDGES
        gr, gc = self.GOAL
        frame[e[gr]:e[gr + 1], e[gc]:e[gc + 1]] = 128
        ar, ac = self._agent
        frame[e[ar]:e[ar + 1], e[ac]:e[ac + 1]] = 255
        return frame

    def reset(self, seed) -> PixelObservation:
        self._begin(seed)
        cells = [(r, c)
                 for r in range(self.SIZE) for c in range(self.SIZE)
                 if (r, c) != self.GOAL]
        self._agent = cells[int(self._rng.integers(len(cells)))]
        frame = self._render_frame()
        self._stack = np.stack([frame] * 4, axis=-1)
        return self.render_pixels()

    def render_pixels(self) -> PixelObservation:
        if self._rng is None:
            raise UsageError("pixelgrid: render before reset")
        return PixelObservation(self._stack.copy())

    def step(self, action) -> StepResult:
        self._check_step(action)
        dr, dc = self.MOVES[int(action)]
        r = min(max(self._agent[0] + dr, 0), self.SIZE - 1)
        c = min(max(self._agent[1] + dc, 0), self.SIZE - 1)
        self._agent = (r, c)

        frame = self._render_frame()
        self._stack = np.concatenate(
            [self._stack[:, :, 1:], frame[:, :, None]], axis=-1)

        reached = self._agent == self.GOAL
        reward = 1.0 if reached else -0.01
        done, truncated = self._wrap_up(reached)
        return StepResult(self.render_pixels(), reward, done, truncated)


_REGISTRY = {
    "cartpole-v0": lambda: CartPole(version=0),
    "cartpole-v1": lambda: CartPole(version=1),
    "pendulum-v0": Pendulum,
    "acrobot-v1": Acrobot,
    "pixelgrid": PixelGrid,
}


def env_names():
    return sorted(_REGISTRY)


def make(name: str):
    """Build a fresh environment by registry name."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UsageError(
            f"unknown environment {name!r}, expected one of {env_names()}") from None
    return factory()
