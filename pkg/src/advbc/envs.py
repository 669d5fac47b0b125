"""Bandit and 2D point-navigation environments.

Both expose ``reset(seed) -> state`` and ``step(action) -> StepResult``. They
are only touched for dataset generation and evaluation rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # exp(-|x|) keeps tiny tails such as sigmoid(-96) instead of rounding to 0
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def bandit_reward(a):
    """Sum of two sigmoid bumps centred on a = -1 and a = +1.

    Works elementwise on arrays; returns a float for scalar input.
    """
    a = np.asarray(a, dtype=np.float64)
    right = 4.0 - (5.0 * (a - 1.0)) ** 2
    left = 4.0 - (5.0 * (a + 1.0)) ** 2
    r = sigmoid(right) + sigmoid(left)
    return float(r) if r.ndim == 0 else r


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool


class EpisodeDone(RuntimeError):
    pass


class BanditEnv:
    """One-step episodes; the state is the constant scalar 0."""

    name = "bandit"
    state_dim = 1
    action_dim = 1

    def __init__(self, action_low: float = -2.0, action_high: float = 2.0):
        self.action_low = np.array([action_low])
        self.action_high = np.array([action_high])
        self.done = True

    def reset(self, seed=None) -> np.ndarray:
        self.done = False
        return np.zeros(1)

    def step(self, action) -> StepResult:
        if self.done:
            raise EpisodeDone("bandit episode already finished; call reset()")
        a = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        a = min(max(a, self.action_low[0]), self.action_high[0])
        self.done = True
        return StepResult(np.zeros(1), bandit_reward(a), True)


@dataclass
class Nav2dEnv:
    """Velocity-controlled point in the unit square.

    The agent starts in a small square in the bottom-left corner and is
    rewarded for being near either the top-left or the bottom-right target.
    Touching the central square ends the episode with zero reward.
    """

    dt: float = 0.01
    max_steps: int = 1000
    start_low: float = 0.0
    start_high: float = 0.1
    target_tl: tuple = (0.05, 0.95)
    target_br: tuple = (0.95, 0.05)
    kill_low: float = 0.40
    kill_high: float = 0.60
    reward_sigma: float = 0.10
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    step_index: int = 0
    done: bool = True

    name = "nav2d"
    state_dim = 2
    action_dim = 2
    action_low = np.array([-1.0, -1.0])
    action_high = np.array([1.0, 1.0])

    def reward(self, position) -> float:
        return nav_reward(position, self.target_tl, self.target_br, self.reward_sigma)

    def in_kill_square(self, position) -> bool:
        p = np.asarray(position)
        return bool(np.all((p >= self.kill_low) & (p <= self.kill_high)))

    def reset(self, seed=None) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.position = rng.uniform(self.start_low, self.start_high, size=2)
        self.step_index = 0
        self.done = False
        return self.position.copy()

    def step(self, action) -> StepResult:
        if self.done:
            raise EpisodeDone("nav2d episode already finished; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        self.position = np.clip(self.position + self.dt * a, 0.0, 1.0)
        self.step_index += 1
        if self.in_kill_square(self.position):
            self.done = True
            return StepResult(self.position.copy(), 0.0, True)
        self.done = self.step_index >= self.max_steps
        return StepResult(self.position.copy(), self.reward(self.position), self.done)


def nav_reward(position, target_tl=(0.05, 0.95), target_br=(0.95, 0.05), sigma=0.10):
    """Two isotropic Gaussian bumps of height 1 on the targets.

    ``position`` may be a single 2-vector or an (n, 2) array.
    """
    p = np.asarray(position, dtype=np.float64)
    d_tl = np.sum((p - np.asarray(target_tl)) ** 2, axis=-1)
    d_br = np.sum((p - np.asarray(target_br)) ** 2, axis=-1)
    r = np.exp(-d_tl / (2 * sigma**2)) + np.exp(-d_br / (2 * sigma**2))
    return float(r) if np.ndim(r) == 0 else r


def nav_step(env: Nav2dEnv, action) -> StepResult:
    return env.step(action)


def nav_reset(env: Nav2dEnv, rng_seed=None) -> np.ndarray:
    return env.reset(rng_seed)


def make_env(name: str):
    if name == "bandit":
        return BanditEnv()
    if name == "nav2d":
        return Nav2dEnv()
    raise ValueError(f"unknown environment {name!r} (expected 'bandit' or 'nav2d')")


class CountingEnv:
    """Wraps an environment and counts reset/step calls."""

    def __init__(self, env):
        self.env = env
        self.resets = 0
        self.steps = 0

    @property
    def calls(self) -> int:
        return self.resets + self.steps

    def reset(self, seed=None):
        self.resets += 1
        return self.env.reset(seed)

    def step(self, action):
        self.steps += 1
        return self.env.step(action)

    def __getattr__(self, name):
        return getattr(self.env, name)


def reward_grid(env_name: str, resolution: int):
    """Rows for a reward heatmap: (x, y, r) on nav2d or (a, r) on the bandit."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if env_name == "bandit":
        a = np.linspace(-2.0, 2.0, resolution)
        return ["a", "reward"], np.column_stack([a, bandit_reward(a)])
    if env_name == "nav2d":
        env = Nav2dEnv()
        ticks = np.linspace(0.0, 1.0, resolution)
        xs, ys = np.meshgrid(ticks, ticks, indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel()])
        r = nav_reward(pts, env.target_tl, env.target_br, env.reward_sigma)
        inside = np.all((pts >= env.kill_low) & (pts <= env.kill_high), axis=1)
        r = np.where(inside, 0.0, r)
        return ["x", "y", "reward"], np.column_stack([pts, r])
    raise ValueError(f"unknown environment {env_name!r}")
