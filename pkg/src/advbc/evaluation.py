"""Policy rollouts, cross-seed summaries and CSV output."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fileio import atomic_write_text, fmt, read_csv, write_csv  # noqa: F401  (re-exported)


@dataclass
class EvalReport:
    returns: list[float]
    env_id: str
    seed: int
    checkpoint: str = ""
    lengths: list[int] = field(default_factory=list)

    @property
    def n_episodes(self) -> int:
        return len(self.returns)

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std(self) -> float:
        return float(np.std(self.returns))

    def rows(self):
        for i, r in enumerate(self.returns):
            yield [i, r, self.lengths[i] if self.lengths else ""]

    def save_csv(self, path) -> None:
        """Per-episode rows followed by the summary as a trailing comment-free block."""
        rows = list(self.rows())
        rows.append(["mean", self.mean, ""])
        rows.append(["std", self.std, ""])
        write_csv(path, ["episode", "return", "length"], rows)

    @classmethod
    def load_csv(cls, path, env_id: str = "", seed: int = 0, checkpoint: str = "") -> "EvalReport":
        header, rows = read_csv(path)
        if header != ["episode", "return", "length"]:
            raise ValueError(f"{path}: not an evaluation report")
        eps = [r for r in rows if r[0].isdigit()]
        return cls(
            [float(r[1]) for r in eps],
            env_id,
            seed,
            checkpoint,
            [int(r[2]) for r in eps if r[2]],
        )


def rollout(policy, env, n_episodes: int, seed=0, checkpoint: str = "") -> EvalReport:
    """Run the deterministic policy for ``n_episodes`` and sum rewards per episode.

    ``policy`` maps a batch of states (n, state_dim) to actions (n, action_dim).
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    returns, lengths = [], []
    for _ in range(n_episodes):
        state = env.reset(rng)
        if len(state) != env.state_dim:
            raise ValueError("environment state width mismatch")
        total, steps = 0.0, 0
        while True:
            action = np.asarray(policy(state.reshape(1, -1)), dtype=np.float64).reshape(-1)
            if len(action) != env.action_dim:
                raise ValueError(f"policy emits {len(action)} actions, {env.name} expects {env.action_dim}")
            res = env.step(action)
            total += res.reward
            steps += 1
            state = res.next_state
            if res.done:
                break
        returns.append(total)
        lengths.append(steps)
    return EvalReport(returns, env.name, int(seed) if np.isscalar(seed) else 0, checkpoint, lengths)


@dataclass
class Summary:
    mean: float
    std: float
    n: int
    values: list[float]


def summarize(reports) -> Summary:
    """Mean of per-report means and their population std across reports."""
    means = [r.mean if isinstance(r, EvalReport) else float(r) for r in reports]
    if not means:
        raise ValueError("need at least one report to summarize")
    return Summary(float(np.mean(means)), float(np.std(means)), len(means), means)


def bandit_action(policy) -> float:
    """The bandit policy's action at its only state."""
    return float(np.asarray(policy(np.zeros((1, 1)))).reshape(-1)[0])
