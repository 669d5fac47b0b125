"""Deterministic policies with tanh heads scaled to an action box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, init_mlp, load_mlp, save_mlp


@dataclass
class Policy:
    mlp: Mlp
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.action_low = np.atleast_1d(np.asarray(self.action_low, dtype=np.float64))
        self.action_high = np.atleast_1d(np.asarray(self.action_high, dtype=np.float64))
        if self.mlp.output_activation != "tanh":
            raise ValueError("policy networks need a tanh output head")
        if self.action_low.shape != (self.mlp.out_dim,):
            raise ValueError("action bounds do not match the network output width")

    @property
    def centre(self) -> np.ndarray:
        return 0.5 * (self.action_high + self.action_low)

    @property
    def half_range(self) -> np.ndarray:
        return 0.5 * (self.action_high - self.action_low)

    def scale(self, raw):
        return self.centre + self.half_range * raw

    def __call__(self, states):
        return self.scale(self.mlp(states))

    act = __call__

    def save(self, path) -> None:
        save_mlp(self.mlp, path)

    @classmethod
    def load(cls, path, action_low, action_high) -> "Policy":
        return cls(load_mlp(path), action_low, action_high)


def make_policy(state_dim, action_low, action_high, hidden=(64, 64), activation="tanh", seed=0) -> Policy:
    low = np.atleast_1d(np.asarray(action_low, dtype=np.float64))
    sizes = [state_dim, *hidden, len(low)]
    return Policy(init_mlp(sizes, activation, "tanh", seed), low, action_high)
