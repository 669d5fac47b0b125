"""Behavioral cloning: least-squares regression of actions on states.

With a fixed isotropic Gaussian policy the maximum-likelihood objective is
mean squared error on the Gaussian mean, so the fitted policy converges to the
conditional mean of the demonstrated actions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import AdamState, adam_step, backward, forward
from .policy import Policy, make_policy

log = logging.getLogger(__name__)


@dataclass
class BcConfig:
    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-3
    policy_layers: tuple = (64, 64)
    hidden_activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")


def mse_step(policy: Policy, states, actions, opt: AdamState) -> float:
    """One Adam step on the batch MSE; returns the pre-step loss."""
    raw, cache = forward(policy.mlp, states)
    err = policy.scale(raw) - actions
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise FloatingPointError(f"BC loss became non-finite at optimizer step {opt.step_count}")
    grad_out = (2.0 / err.size) * err * policy.half_range
    grads = backward(policy.mlp, cache, grad_out)
    adam_step(policy.mlp.params(), grads.param_grads, opt)
    return loss


def train_bc(dataset: Dataset, config: BcConfig, action_low, action_high) -> tuple[Policy, list[float]]:
    """Fit a tanh-bounded policy by minibatch MSE.

    Returns the policy and the per-epoch mean training loss.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    policy = make_policy(
        dataset.state_dim,
        action_low,
        action_high,
        config.policy_layers,
        config.hidden_activation,
        seed=int(rng.integers(2**63)),
    )
    opt = AdamState.for_params(policy.mlp.params(), lr=config.lr)
    n = len(dataset)
    history = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            total += mse_step(policy, dataset.states[idx], dataset.actions[idx], opt)
            batches += 1
        history.append(total / batches)
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.debug("bc epoch %d mse %.6g", epoch, history[-1])
    return policy, history
