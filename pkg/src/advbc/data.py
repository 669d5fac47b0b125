"""Demonstration datasets, scripted experts and the negative-sample replay buffer."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .envs import Nav2dEnv
from .fileio import atomic_write_text


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """State/action pairs stored as two row-aligned arrays.

    ``boundaries`` holds the start index of every trajectory.
    """

    states: np.ndarray
    actions: np.ndarray
    boundaries: list[int] = field(default_factory=list)
    meta: str = ""

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.states.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("states and actions must be 2-D arrays")
        if len(self.states) != len(self.actions):
            raise ValueError(f"{len(self.states)} states but {len(self.actions)} actions")
        b = list(self.boundaries)
        if len(self.states) and (not b or b[0] != 0):
            raise ValueError("first trajectory boundary must be 0")
        if any(y <= x for x, y in zip(b, b[1:])) or (b and b[-1] >= max(len(self.states), 1)):
            raise ValueError("trajectory boundaries must be strictly increasing and in range")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions))):
            raise ValueError("dataset contains non-finite values")
        self.boundaries = b

    @classmethod
    def empty(cls, state_dim: int, action_dim: int, meta: str = "") -> "Dataset":
        return cls(np.zeros((0, state_dim)), np.zeros((0, action_dim)), [], meta)

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def n_traj(self) -> int:
        return len(self.boundaries)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i) -> Transition:
        return Transition(self.states[i], self.actions[i])

    @property
    def transitions(self) -> list[Transition]:
        return [Transition(s, a) for s, a in zip(self.states, self.actions)]

    def trajectories(self):
        ends = self.boundaries[1:] + [len(self)]
        for start, end in zip(self.boundaries, ends):
            yield self.states[start:end], self.actions[start:end]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.states.shape == other.states.shape
            and self.actions.shape == other.actions.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and self.boundaries == other.boundaries
            and self.meta == other.meta
        )


def _from_trajectories(trajs, state_dim, action_dim, meta) -> Dataset:
    if not trajs:
        return Dataset.empty(state_dim, action_dim, meta)
    boundaries, start = [], 0
    for s, _ in trajs:
        boundaries.append(start)
        start += len(s)
    states = np.concatenate([s for s, _ in trajs]).reshape(-1, state_dim)
    actions = np.concatenate([a for _, a in trajs]).reshape(-1, action_dim)
    return Dataset(states, actions, boundaries, meta)


def sample_bandit_dataset(n: int, mode_std: float = 0.1, seed=0) -> Dataset:
    """Actions from an equal-weight mixture of N(-1, std^2) and N(+1, std^2) at state 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode_std <= 0:
        raise ValueError("mode_std must be positive")
    rng = np.random.default_rng(seed)
    centres = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    actions = centres + mode_std * rng.standard_normal(n)
    return Dataset(
        np.zeros((n, 1)),
        actions.reshape(n, 1),
        list(range(n)),
        f"env=bandit variant=bimodal n={n} mode_std={mode_std} seed={seed}",
    )


TARGETS = {"tl": "target_tl", "br": "target_br"}


@dataclass
class ExpertScript:
    """Pursuit controller towards a fixed target, noisy, clamped to [-1, 1]^2.

    Heads straight at the target at ``speed``; within ``speed / gain`` of it
    the commanded speed falls off linearly with distance, so the expert
    settles on the target instead of chattering around it.
    """

    target: np.ndarray
    noise_std: float = 0.05
    speed: float = 0.8
    gain: float = 10.0

    def act(self, position, rng: np.random.Generator) -> np.ndarray:
        delta = np.asarray(self.target, dtype=np.float64) - position
        dist = float(np.hypot(delta[0], delta[1]))
        if dist > 0.0:
            command = delta / dist * min(self.speed, self.gain * dist)
        else:
            command = np.zeros(2)
        if self.noise_std > 0:
            command = command + self.noise_std * rng.standard_normal(2)
        return np.clip(command, -1.0, 1.0)


class ExpertFailure(RuntimeError):
    pass


def _rollout_nav(env: Nav2dEnv, choose_action, rng, forbid_kill: bool):
    state = env.reset(rng)
    states, actions = [], []
    ret = 0.0
    while True:
        action = choose_action(state, rng)
        states.append(state)
        actions.append(action)
        res = env.step(action)
        ret += res.reward
        if forbid_kill and env.in_kill_square(res.next_state):
            raise ExpertFailure(
                f"scripted expert entered the kill square at step {env.step_index}, "
                f"position {res.next_state.tolist()}; reduce the noise or move the targets"
            )
        state = res.next_state
        if res.done:
            break
    return np.array(states), np.array(actions), ret


def generate_expert_nav(
    target: str, n_traj: int, seed=0, noise_std: float = 0.05, env=None, **expert_opts
) -> Dataset:
    if target not in TARGETS:
        raise ValueError(f"target must be one of {sorted(TARGETS)}, got {target!r}")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    env = env or Nav2dEnv()
    expert = ExpertScript(np.array(getattr(env, TARGETS[target])), noise_std=noise_std, **expert_opts)
    rng = np.random.default_rng(seed)
    trajs, returns = [], []
    for _ in range(n_traj):
        s, a, ret = _rollout_nav(env, expert.act, rng, forbid_kill=True)
        trajs.append((s, a))
        returns.append(ret)
    meta = (
        f"env=nav2d variant={target} n_traj={n_traj} seed={seed} noise_std={noise_std} "
        f"mean_return={float(np.mean(returns))!r}"
    )
    return _from_trajectories(trajs, 2, 2, meta)


def generate_random_nav(n_traj: int, seed=0, env=None) -> Dataset:
    """Trajectories driven by i.i.d. uniform actions on [-1, 1]^2."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    env = env or Nav2dEnv()
    rng = np.random.default_rng(seed)
    trajs, returns = [], []
    for _ in range(n_traj):
        s, a, ret = _rollout_nav(env, lambda _s, r: r.uniform(-1.0, 1.0, size=2), rng, forbid_kill=False)
        trajs.append((s, a))
        returns.append(ret)
    meta = f"env=nav2d variant=random n_traj={n_traj} seed={seed} mean_return={float(np.mean(returns))!r}"
    return _from_trajectories(trajs, 2, 2, meta)


def mix(a: Dataset, b: Dataset) -> Dataset:
    if (a.state_dim, a.action_dim) != (b.state_dim, b.action_dim):
        raise ValueError(
            f"cannot mix datasets with dims ({a.state_dim},{a.action_dim}) and ({b.state_dim},{b.action_dim})"
        )
    if len(b) == 0:
        return Dataset(a.states.copy(), a.actions.copy(), list(a.boundaries), a.meta)
    if len(a) == 0:
        return Dataset(b.states.copy(), b.actions.copy(), list(b.boundaries), b.meta)
    return Dataset(
        np.concatenate([a.states, b.states]),
        np.concatenate([a.actions, b.actions]),
        a.boundaries + [i + len(a) for i in b.boundaries],
        f"mix({a.meta} ; {b.meta})",
    )


def meta_field(meta: str, key: str, default=None):
    """Pull ``key=value`` out of a provenance string (first occurrence)."""
    for token in meta.replace("(", " ").replace(")", " ").replace(";", " ").split():
        if token.startswith(key + "="):
            return token.split("=", 1)[1]
    return default


def make_nav_dataset(variant: str, n_traj: int, seed=0, **expert_opts) -> Dataset:
    """The nav2d dataset family: tl, br, combined (tl+br), random, corrupted (tl+random)."""
    s1, s2 = (int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(2))
    if variant in ("tl", "br"):
        return generate_expert_nav(variant, n_traj, s1, **expert_opts)
    if variant == "combined":
        return mix(
            generate_expert_nav("tl", n_traj, s1, **expert_opts),
            generate_expert_nav("br", n_traj, s2, **expert_opts),
        )
    if variant == "random":
        return generate_random_nav(n_traj, s1)
    if variant == "corrupted":
        return mix(generate_expert_nav("tl", n_traj, s1, **expert_opts), generate_random_nav(n_traj, s2))
    raise ValueError(f"unknown nav2d variant {variant!r}")


def actions_in_box(dataset: Dataset, low, high) -> np.ndarray:
    """Actions recorded at states inside the axis-aligned box [low, high]."""
    inside = np.all((dataset.states >= low) & (dataset.states <= high), axis=1)
    return dataset.actions[inside]


def histogram_mode(values, bin_width: float = 0.1, low: float = -1.0, high: float = 1.0):
    """Counts on a fixed grid and the index of the fullest bin (lowest index on ties)."""
    n_bins = int(round((high - low) / bin_width))
    edges = np.linspace(low, high, n_bins + 1)
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), edges)
    return counts, edges, int(np.argmax(counts))


def start_action_stats(clean: Dataset, corrupted: Dataset, env=None, bin_width: float = 0.1) -> list[dict]:
    """Per action coordinate: histogram mode bin and mean at start-region states of both datasets."""
    env = env or Nav2dEnv()
    a0 = actions_in_box(clean, env.start_low, env.start_high)
    a1 = actions_in_box(corrupted, env.start_low, env.start_high)
    if len(a0) == 0 or len(a1) == 0:
        raise ValueError("no transitions recorded in the start region")
    low, high = float(env.action_low[0]), float(env.action_high[0])
    out = []
    for k in range(clean.action_dim):
        _, edges, m0 = histogram_mode(a0[:, k], bin_width, low, high)
        _, _, m1 = histogram_mode(a1[:, k], bin_width, low, high)
        out.append(
            {
                "coord": k,
                "n_clean": len(a0),
                "n_corrupted": len(a1),
                "mode_bin_clean": m0,
                "mode_bin_corrupted": m1,
                "mode_clean": 0.5 * (edges[m0] + edges[m0 + 1]),
                "mode_corrupted": 0.5 * (edges[m1] + edges[m1 + 1]),
                "mean_clean": float(a0[:, k].mean()),
                "mean_corrupted": float(a1[:, k].mean()),
            }
        )
    return out


# replay buffer ---------------------------------------------------------------

SOURCE_UNIFORM = 0
SOURCE_POLICY = 1


class ReplayBuffer:
    """FIFO ring of (state, action) negatives, each tagged with where it came from."""

    def __init__(self, state_dim: int, action_dim: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.sources = np.zeros(capacity, dtype=np.int8)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add_batch(self, states, actions, source: int) -> None:
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        n = len(states)
        if n > self.capacity:
            states, actions, n = states[-self.capacity :], actions[-self.capacity :], self.capacity
        idx = (self.ptr + np.arange(n)) % self.capacity
        self.states[idx] = states
        self.actions[idx] = actions
        self.sources[idx] = source
        self.ptr = int((self.ptr + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def _order(self) -> np.ndarray:
        # oldest first
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.ptr + np.arange(self.capacity)) % self.capacity

    @property
    def entries(self) -> list[Transition]:
        return [Transition(self.states[i], self.actions[i]) for i in self._order()]

    def sample(self, n: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return self.states[idx], self.actions[idx]

    def composition(self) -> dict:
        src = self.sources[: self.size]
        n_policy = int(np.sum(src == SOURCE_POLICY))
        return {"size": self.size, "uniform": self.size - n_policy, "policy": n_policy}


def seed_replay(dataset_states, action_low, action_high, n: int, seed=0, capacity: int | None = None) -> ReplayBuffer:
    """Pair uniformly chosen expert states with uniform random actions in [low, high]."""
    states = np.asarray(dataset_states, dtype=np.float64)
    if states.ndim == 1:
        states = states.reshape(-1, 1)
    if len(states) == 0:
        raise ValueError("need at least one expert state to seed the replay buffer")
    if n < 1:
        raise ValueError("n must be >= 1")
    low = np.atleast_1d(np.asarray(action_low, dtype=np.float64))
    high = np.atleast_1d(np.asarray(action_high, dtype=np.float64))
    rng = np.random.default_rng(seed)
    picked = states[rng.integers(0, len(states), size=n)]
    actions = rng.uniform(low, high, size=(n, len(low)))
    buf = ReplayBuffer(states.shape[1], len(low), capacity or n)
    buf.add_batch(picked, actions, SOURCE_UNIFORM)
    return buf


def push_policy_samples(buffer: ReplayBuffer, policy, states, n: int, seed=0):
    """Append ``n`` pairs (s, policy(s)) with s drawn uniformly from ``states``.

    ``policy`` maps a batch of states to a batch of actions. Returns the pushed
    (states, actions).
    """
    states = np.asarray(states, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    picked = states[rng.integers(0, len(states), size=n)]
    actions = np.asarray(policy(picked), dtype=np.float64).reshape(n, -1)
    buffer.add_batch(picked, actions, SOURCE_POLICY)
    return picked, actions


# serialization ---------------------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    lines = [f"dataset {dataset.state_dim} {dataset.action_dim} {dataset.n_traj}"]
    if dataset.meta:
        lines.append("meta " + dataset.meta.replace("\n", " "))
    for states, actions in dataset.trajectories():
        lines.append(f"traj {len(states)}")
        for s, a in zip(states, actions):
            lines.append(" ".join(map(repr, s.tolist())) + " | " + " ".join(map(repr, a.tolist())))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    lines = path.read_text().splitlines()

    def fail(lineno, msg):
        raise DatasetFormatError(f"{path}:{lineno}: {msg}")

    if not lines:
        fail(1, "empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dataset":
        fail(1, f"expected 'dataset <state_dim> <action_dim> <n_traj>', got {lines[0]!r}")
    try:
        sdim, adim, n_traj = (int(t) for t in head[1:])
    except ValueError:
        fail(1, "header dimensions must be integers")
    meta = ""
    i = 1
    if i < len(lines) and lines[i].startswith("meta"):
        meta = lines[i][5:]
        i += 1
    states, actions, boundaries = [], [], []
    while i < len(lines):
        tok = lines[i].split()
        if len(tok) != 2 or tok[0] != "traj":
            fail(i + 1, f"expected 'traj <length>', got {lines[i]!r}")
        try:
            length = int(tok[1])
        except ValueError:
            fail(i + 1, "trajectory length must be an integer")
        if length < 1:
            fail(i + 1, "trajectory length must be positive")
        boundaries.append(len(states))
        for j in range(i + 1, i + 1 + length):
            if j >= len(lines):
                fail(j + 1, f"file ends inside a trajectory (expected {length} transitions)")
            parts = lines[j].split("|")
            if len(parts) != 2:
                fail(j + 1, "transition lines need exactly one '|' separator")
            try:
                s = [float(t) for t in parts[0].split()]
                a = [float(t) for t in parts[1].split()]
            except ValueError as exc:
                fail(j + 1, str(exc))
            if len(s) != sdim or len(a) != adim:
                fail(j + 1, f"got {len(s)} state / {len(a)} action values, header declares {sdim} / {adim}")
            states.append(s)
            actions.append(a)
        i += 1 + length
    if len(boundaries) != n_traj:
        fail(len(lines), f"header declares {n_traj} trajectories, found {len(boundaries)}")
    if not states:
        return Dataset.empty(sdim, adim, meta)
    try:
        return Dataset(np.array(states), np.array(actions), boundaries, meta)
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
