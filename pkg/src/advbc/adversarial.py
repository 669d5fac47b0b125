"""Adversarial behavioral cloning.

A discriminator D(s, a) is trained to tell demonstrated pairs from negatives
held in a replay buffer (initially uniform random actions at expert states).
The policy is then pushed uphill on D's logit by chaining dD/da into the
policy's own backward pass, DDPG style. Every ``refresh_every`` iterations the
policy's current actions are added to the buffer and D is trained again.
Optionally the returned policy is an exponential moving average of the
iterates, which damps the oscillation typical of such two-player loops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, ReplayBuffer, push_policy_samples, seed_replay
from .envs import sigmoid
from .nn import AdamState, Mlp, adam_step, backward, forward, init_mlp
from .policy import Policy, make_policy

log = logging.getLogger(__name__)


@dataclass
class AbcConfig:
    n_iters: int = 200  # outer loop length N
    refresh_every: int = 10  # N_D
    n_replay: int = 50_000  # N_R, size of the uniform seed
    buffer_capacity: int = 100_000
    disc_epochs_initial: int = 50
    disc_epochs_refresh: int = 5
    disc_steps_per_epoch: int | None = None  # None: one pass over the expert data
    policy_steps_per_iter: int = 50
    push_per_refresh: int = 5_000
    batch_size: int = 256
    lr_disc: float = 1e-3
    lr_policy: float = 1e-4
    policy_layers: tuple = (64, 64)
    disc_layers: tuple = (64, 64)
    hidden_activation: str = "tanh"
    expert_label: float = 1.0  # < 1 gives one-sided label smoothing
    policy_ema: float = 0.0  # > 0: return an exponential moving average of the policy weights
    sweep_points: int = 4001
    sweep_axis: int = 0
    sweep_state: tuple | None = None  # None: first expert state
    seed: int = 0

    def __post_init__(self):
        ints = (
            "n_iters",
            "refresh_every",
            "n_replay",
            "buffer_capacity",
            "disc_epochs_initial",
            "policy_steps_per_iter",
            "push_per_refresh",
            "batch_size",
            "sweep_points",
        )
        for name in ints:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.disc_epochs_refresh < 0:
            raise ValueError("disc_epochs_refresh must be non-negative")
        if self.refresh_every > self.n_iters:
            raise ValueError("refresh_every (N_D) cannot exceed n_iters (N)")
        if self.lr_disc <= 0 or self.lr_policy <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.policy_ema < 1.0:
            raise ValueError("policy_ema must lie in [0, 1)")
        if not 0.5 < self.expert_label <= 1.0:
            raise ValueError("expert_label must lie in (0.5, 1]")
        if self.buffer_capacity < self.n_replay:
            raise ValueError("buffer_capacity must hold at least the initial uniform seed")


@dataclass
class AbcDiagnostics:
    disc_loss: list = field(default_factory=list)  # (phase_iter, epoch, bce)
    objective: list = field(default_factory=list)  # (iter, mean logit over the iteration)
    objective_steps: list = field(default_factory=list)  # per policy step
    sweeps: dict = field(default_factory=dict)  # iter -> (n, 2) array of (action, logit)
    buffer_stats: list = field(default_factory=list)  # dicts, one per refresh


def make_discriminator(state_dim, action_dim, hidden=(64, 64), activation="tanh", seed=0) -> Mlp:
    return init_mlp([state_dim + action_dim, *hidden, 1], activation, "identity", seed)


def logits(D: Mlp, states, actions) -> np.ndarray:
    return forward(D, np.hstack([states, actions]))[0][:, 0]


def bce_with_logits(z, y) -> float:
    # log(1 + e^z) - y z, computed without overflow
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def bce_grads(D: Mlp, x, y) -> tuple[float, list[np.ndarray]]:
    """Mean BCE of D's logits on rows ``x`` against labels ``y`` and its parameter gradients."""
    z, cache = forward(D, x)
    z = z[:, 0]
    loss = bce_with_logits(z, y)
    grad = ((sigmoid(z) - y) / len(z)).reshape(-1, 1)
    return loss, backward(D, cache, grad).param_grads


def discriminator_loss(D: Mlp, expert: Dataset, buffer: ReplayBuffer, expert_label: float = 1.0) -> float:
    """Class-balanced BCE over the full expert set and the full buffer."""
    ze = logits(D, expert.states, expert.actions)
    zb = logits(D, buffer.states[: buffer.size], buffer.actions[: buffer.size])
    return 0.5 * (bce_with_logits(ze, expert_label) + bce_with_logits(zb, 0.0))


def train_discriminator(
    D: Mlp,
    expert: Dataset,
    buffer: ReplayBuffer,
    epochs: int,
    seed=0,
    opt: AdamState | None = None,
    batch_size: int = 256,
    steps_per_epoch: int | None = None,
    lr: float = 1e-3,
    expert_label: float = 1.0,
) -> list[float]:
    """Minimize BCE with expert pairs labelled 1 and buffer pairs labelled 0.

    Each minibatch is half expert, half buffer. An epoch is one shuffled pass
    over the expert pairs unless ``steps_per_epoch`` caps it. An
    ``expert_label`` below 1 bounds the logit on demonstrated pairs. Returns
    the mean loss of every epoch.
    """
    if len(buffer) == 0:
        raise ValueError("replay buffer is empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if opt is None:
        opt = AdamState.for_params(D.params(), lr=lr)
    half = max(batch_size // 2, 1)
    n = len(expert)
    steps = steps_per_epoch or -(-n // half)
    labels = np.concatenate([np.full(half, float(expert_label)), np.zeros(half)])
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for k in range(steps):
            idx = perm[(k * half + np.arange(half)) % n]
            bs, ba = buffer.sample(half, rng)
            x = np.vstack([np.hstack([expert.states[idx], expert.actions[idx]]), np.hstack([bs, ba])])
            loss, grads = bce_grads(D, x, labels)
            if not np.isfinite(loss):
                raise FloatingPointError(f"discriminator loss non-finite at epoch {epoch}, step {k}")
            total += loss
            adam_step(D.params(), grads, opt)
        history.append(total / steps)
    return history


def policy_objective_grads(policy: Policy, D: Mlp, states) -> tuple[float, list[np.ndarray]]:
    """Mean raw logit J = mean_s D(s, policy(s)) and dJ/dtheta for the policy parameters."""
    states = np.asarray(states, dtype=np.float64)
    if D.in_dim != states.shape[1] + policy.mlp.out_dim:
        raise ValueError(
            f"discriminator expects width {D.in_dim}, got state {states.shape[1]} + action {policy.mlp.out_dim}"
        )
    raw, pcache = forward(policy.mlp, states)
    z, dcache = forward(D, np.hstack([states, policy.scale(raw)]))
    n = len(states)
    d_action = backward(D, dcache, np.full((n, 1), 1.0 / n)).input_grad[:, states.shape[1] :]
    grads = backward(policy.mlp, pcache, d_action * policy.half_range)
    return float(np.mean(z)), grads.param_grads


def policy_update(policy: Policy, D: Mlp, states, opt: AdamState) -> float:
    """One ascent step on mean_s D(s, policy(s)); D itself is left untouched.

    Returns the objective (mean raw logit) evaluated before the step.
    """
    value, grads = policy_objective_grads(policy, D, states)
    # Adam minimizes, so hand it the negated ascent direction
    adam_step(policy.mlp.params(), [-g for g in grads], opt)
    return value


def sweep_logits(D: Mlp, state, action_low, action_high, n_points: int = 4001, axis: int = 0, fixed_action=None):
    """Logit of D along one action coordinate, other coordinates held fixed.

    Returns an (n_points, 2) array of (action value, logit).
    """
    state = np.atleast_1d(np.asarray(state, dtype=np.float64))
    low = np.atleast_1d(np.asarray(action_low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(action_high, dtype=np.float64))
    grid = np.linspace(low[axis], high[axis], n_points)
    base = np.zeros(len(low)) if fixed_action is None else np.asarray(fixed_action, dtype=np.float64)
    actions = np.tile(base, (n_points, 1))
    actions[:, axis] = grid
    z = logits(D, np.tile(state, (n_points, 1)), actions)
    return np.column_stack([grid, z])


def local_maxima(values) -> np.ndarray:
    """Indices of strict interior local maxima of a 1-D sequence."""
    v = np.asarray(values)
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    return np.nonzero(inner)[0] + 1


def abc_train(
    dataset: Dataset,
    config: AbcConfig,
    action_low,
    action_high,
    on_update=None,
) -> tuple[Policy, Mlp, AbcDiagnostics]:
    """Run the full adversarial cloning loop; returns (policy, discriminator, diagnostics).

    ``on_update(diag)``, if given, is called after every discriminator fit so
    callers can persist diagnostics while training is still running.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    c = config
    root = np.random.SeedSequence(c.seed)
    s_policy, s_disc, s_buffer, s_train = (int(s.generate_state(1)[0]) for s in root.spawn(4))
    rng = np.random.default_rng(s_train)
    low = np.atleast_1d(np.asarray(action_low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(action_high, dtype=np.float64))

    policy = make_policy(dataset.state_dim, low, high, c.policy_layers, c.hidden_activation, s_policy)
    D = make_discriminator(dataset.state_dim, dataset.action_dim, c.disc_layers, c.hidden_activation, s_disc)
    buffer = seed_replay(dataset.states, low, high, c.n_replay, s_buffer, capacity=c.buffer_capacity)
    d_opt = AdamState.for_params(D.params(), lr=c.lr_disc)
    p_opt = AdamState.for_params(policy.mlp.params(), lr=c.lr_policy)
    diag = AbcDiagnostics()
    sweep_state = dataset.states[0] if c.sweep_state is None else np.asarray(c.sweep_state, dtype=np.float64)

    def fit_disc(iteration, epochs):
        hist = train_discriminator(
            D, dataset, buffer, epochs, rng, d_opt, c.batch_size, c.disc_steps_per_epoch,
            expert_label=c.expert_label,
        )
        diag.disc_loss.extend((iteration, e, loss) for e, loss in enumerate(hist))
        diag.sweeps[iteration] = sweep_logits(D, sweep_state, low, high, c.sweep_points, c.sweep_axis)
        if on_update is not None:
            on_update(diag)

    fit_disc(0, c.disc_epochs_initial)
    log.debug("abc: initial discriminator loss %.4g", diag.disc_loss[-1][2])

    n = len(dataset)
    ema = [p.copy() for p in policy.mlp.params()] if c.policy_ema > 0 else None
    for it in range(1, c.n_iters + 1):
        vals = []
        for _ in range(c.policy_steps_per_iter):
            idx = rng.integers(0, n, size=c.batch_size)
            vals.append(policy_update(policy, D, dataset.states[idx], p_opt))
            if ema is not None:
                for e, p in zip(ema, policy.mlp.params()):
                    e *= c.policy_ema
                    e += (1.0 - c.policy_ema) * p
        diag.objective_steps.extend(vals)
        diag.objective.append((it, float(np.mean(vals))))
        # a refresh after the last iteration could no longer influence the policy
        if it % c.refresh_every == 0 and it < c.n_iters:
            pushed_states, pushed_actions = push_policy_samples(
                buffer, policy, dataset.states, c.push_per_refresh, rng
            )
            before = float(np.mean(logits(D, pushed_states, pushed_actions)))
            if c.disc_epochs_refresh:
                fit_disc(it, c.disc_epochs_refresh)
            after = float(np.mean(logits(D, pushed_states, pushed_actions)))
            diag.buffer_stats.append(
                {"iter": it, **buffer.composition(), "pushed_logit_before": before, "pushed_logit_after": after}
            )
    if ema is not None:
        for p, e in zip(policy.mlp.params(), ema):
            p[...] = e
    if on_update is not None:
        on_update(diag)
    return policy, D, diag
