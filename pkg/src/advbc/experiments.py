"""Named experiments: training presets, manifests of CLI steps, result tables.

A manifest is an ordered list of command lines (argument vectors for
``advbc``) with every seed and path spelled out, so an experiment can be
re-run or inspected step by step. ``run_experiment`` executes the steps and
then condenses the per-run outputs into a few summary CSVs.
"""

from __future__ import annotations

import logging
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adversarial import AbcConfig, local_maxima
from .bc import BcConfig
from .data import histogram_mode, load_dataset, meta_field, start_action_stats
from .envs import bandit_reward, make_env
from .evaluation import EvalReport, atomic_write_text, bandit_action, read_csv, summarize, write_csv
from .policy import Policy

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1", "table1", "fig3_analog")
DEFAULT_SEEDS = {"fig1": list(range(10)), "table1": list(range(5)), "fig3_analog": list(range(5))}

BANDIT_N = 10_000
NAV_N_TRAJ = 20
DATA_SEED = 0
EVAL_EPISODES = 20
EVAL_SEED_OFFSET = 10_000

# One outer iteration suffices on the bandit: a single well-fit discriminator
# already has both modes as its maxima, so the policy only has to climb.
BANDIT_BC = BcConfig(epochs=50)
BANDIT_ABC = AbcConfig(
    n_iters=1,
    refresh_every=1,
    n_replay=10_000,
    disc_epochs_initial=20,
    policy_steps_per_iter=1000,
    lr_policy=1e-3,
)
NAV_BC = BcConfig(epochs=200)
# A small discriminator with one-epoch refreshes overfits the noisy parts of
# the data less, and the weight average damps the policy's oscillation around
# the discriminator's moving maxima. The buffer is large enough that FIFO
# eviction never reaches the uniform seed.
NAV_ABC = AbcConfig(
    n_iters=200,
    refresh_every=10,
    n_replay=40_000,
    disc_epochs_initial=30,
    disc_epochs_refresh=1,
    push_per_refresh=2_000,
    lr_policy=3e-4,
    disc_layers=(32,),
    policy_ema=0.999,
    sweep_points=201,
)


def bc_preset(env: str) -> BcConfig:
    return {"bandit": BANDIT_BC, "nav2d": NAV_BC}[env]


def abc_preset(env: str) -> AbcConfig:
    return {"bandit": BANDIT_ABC, "nav2d": NAV_ABC}[env]


def abc_config(env: str, n=None, nd=None, seed=0) -> AbcConfig:
    """The environment preset with optional overrides of N and N_D."""
    base = abc_preset(env)
    changes = {"seed": seed}
    if n is not None:
        changes["n_iters"] = n
    if nd is not None:
        changes["refresh_every"] = nd
    elif n is not None and base.refresh_every > n:
        changes["refresh_every"] = n
    return replace(base, **changes)


@dataclass
class ExperimentManifest:
    name: str
    out_dir: Path
    seeds: list
    steps: list = field(default_factory=list)  # argv lists, in execution order

    def add(self, *argv) -> None:
        self.steps.append([str(a) for a in argv])

    def to_text(self) -> str:
        head = f"# {self.name} seeds={','.join(map(str, self.seeds))}\n"
        return head + "".join("advbc " + shlex.join(step) + "\n" for step in self.steps)

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.out_dir / "manifest.txt"
        atomic_write_text(path, self.to_text())
        return path


def _run_dir(out: Path, dataset: str, algo: str, seed: int) -> Path:
    return out / "runs" / dataset / algo / f"seed{seed}"


def _train_and_eval(m: ExperimentManifest, env: str, dataset: str, data_path: Path, algo: str, seed: int):
    run = _run_dir(m.out_dir, dataset, algo, seed)
    ckpt = run / "policy.ckpt"
    if algo == "bc":
        m.add("train", "bc", "--data", data_path, "--env", env, "--out", ckpt,
              "--epochs", bc_preset(env).epochs, "--seed", seed)
    else:
        cfg = abc_preset(env)
        m.add("train", "abc", "--data", data_path, "--env", env, "--out", ckpt,
              "--n", cfg.n_iters, "--nd", cfg.refresh_every, "--seed", seed)
    m.add("eval", "rollout", "--ckpt", ckpt, "--env", env, "--episodes", EVAL_EPISODES,
          "--seed", EVAL_SEED_OFFSET + seed, "--out", run / "eval.csv")


def build_manifest(name: str, out_dir, seeds) -> ExperimentManifest:
    name = name.replace("-", "_")
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    out = Path(out_dir)
    m = ExperimentManifest(name, out, seeds)
    if name == "fig1":
        data = out / "data" / "bandit.txt"
        m.add("data", "gen", "--env", "bandit", "--n", BANDIT_N, "--seed", DATA_SEED, "--out", data)
        m.add("env", "dump-reward", "--env", "bandit", "--resolution", 4001, "--out", out / "bandit_reward.csv")
        for s in seeds:
            for algo in ("bc", "abc"):
                _train_and_eval(m, "bandit", "bimodal", data, algo, s)
        return m
    variants = ("tl", "br", "combined") if name == "table1" else ("tl", "corrupted")
    paths = {}
    for v in variants:
        paths[v] = out / "data" / f"{v}.txt"
        m.add("data", "gen", "--env", "nav2d", "--variant", v, "--n", NAV_N_TRAJ, "--seed", DATA_SEED,
              "--out", paths[v])
    for s in seeds:
        for v in variants:
            for algo in ("bc", "abc"):
                _train_and_eval(m, "nav2d", v, paths[v], algo, s)
    return m


def run_manifest(manifest: ExperimentManifest, runner=None) -> None:
    if runner is None:
        from .cli import run as runner
    for i, step in enumerate(manifest.steps):
        log.info("[%s %d/%d] advbc %s", manifest.name, i + 1, len(manifest.steps), shlex.join(step))
        runner(step)


def _eval_report(m: ExperimentManifest, dataset: str, algo: str, seed: int) -> EvalReport:
    return EvalReport.load_csv(_run_dir(m.out_dir, dataset, algo, seed) / "eval.csv", seed=seed)


def _grid(m: ExperimentManifest, variants, unit_of) -> list[list]:
    rows = []
    for v in variants:
        for algo in ("bc", "abc"):
            means = [_eval_report(m, v, algo, s).mean for s in m.seeds]
            agg = summarize(means)
            unit = unit_of(v, algo)
            rows.append([v, algo, agg.mean, agg.std, agg.mean / unit, ";".join(repr(x) for x in means)])
    return rows


def _expert_return(path: Path) -> float:
    return float(meta_field(load_dataset(path).meta, "mean_return"))


def summarize_fig1(m: ExperimentManifest) -> list[Path]:
    out = m.out_dir
    data = load_dataset(out / "data" / "bandit.txt")
    counts, edges, _ = histogram_mode(data.actions[:, 0], 0.1, -2.0, 2.0)
    hist = out / "fig1_histogram.csv"
    write_csv(hist, ["bin_low", "bin_high", "count"], zip(edges[:-1], edges[1:], counts))
    env = make_env("bandit")
    rows, sweep_rows = [], []
    for s in m.seeds:
        for algo in ("bc", "abc"):
            pol = Policy.load(_run_dir(out, "bimodal", algo, s) / "policy.ckpt", env.action_low, env.action_high)
            a = bandit_action(pol)
            rows.append([s, algo, a, bandit_reward(a)])
        sweep = _run_dir(out, "bimodal", "abc", s) / "diag" / "logit_sweep_0.csv"
        _, srows = read_csv(sweep)
        grid = np.array([[float(x) for x in r] for r in srows])
        peaks = grid[local_maxima(grid[:, 1]), 0]
        sweep_rows.append([s, len(peaks), ";".join(repr(float(p)) for p in peaks)])
    actions = out / "fig1_actions.csv"
    write_csv(actions, ["seed", "algo", "action", "reward"], rows)
    maxima = out / "fig1_sweep_maxima.csv"
    write_csv(maxima, ["seed", "n_maxima", "maxima"], sweep_rows)
    stats = out / "fig1_dataset.csv"
    write_csv(stats, ["n", "mean", "std"], [[len(data), float(data.actions.mean()), float(data.actions.std())]])
    return [hist, actions, maxima, stats]


def summarize_table1(m: ExperimentManifest) -> list[Path]:
    out = m.out_dir
    experts = {v: _expert_return(out / "data" / f"{v}.txt") for v in ("tl", "br", "combined")}
    e_tl = experts["tl"]
    path = out / "table1.csv"
    rows = [[v, "expert", experts[v], 0.0, experts[v] / e_tl, ""] for v in ("tl", "br", "combined")]
    rows += _grid(m, ("tl", "br", "combined"), lambda v, a: e_tl)
    write_csv(path, ["dataset", "algo", "mean_return", "std", "ratio_to_expert_tl", "per_seed"], rows)
    return [path]


def summarize_fig3(m: ExperimentManifest) -> list[Path]:
    out = m.out_dir
    clean_means = {a: summarize([_eval_report(m, "tl", a, s).mean for s in m.seeds]).mean for a in ("bc", "abc")}
    path = out / "fig3_analog.csv"
    rows = [
        ["tl", "expert", _expert_return(out / "data" / "tl.txt"), 0.0, float("nan"), ""],
    ]
    grid = _grid(m, ("tl", "corrupted"), lambda v, a: clean_means[a] if clean_means[a] != 0 else float("nan"))
    rows += [["clean" if r[0] == "tl" else r[0], *r[1:]] for r in grid]
    write_csv(path, ["dataset", "algo", "mean_return", "std", "ratio_to_clean", "per_seed"], rows)
    stats = start_action_stats(load_dataset(out / "data" / "tl.txt"), load_dataset(out / "data" / "corrupted.txt"))
    mode_path = out / "fig3_start_actions.csv"
    keys = list(stats[0])
    write_csv(mode_path, keys, [[row[k] for k in keys] for row in stats])
    return [path, mode_path]


SUMMARIES = {"fig1": summarize_fig1, "table1": summarize_table1, "fig3_analog": summarize_fig3}


def run_experiment(name: str, out_dir, seeds=None, runner=None) -> list[Path]:
    """Build the manifest, execute it and write the summary tables.

    Returns the paths of the summary CSVs (the manifest itself comes first).
    """
    key = name.replace("-", "_")
    m = build_manifest(key, out_dir, DEFAULT_SEEDS.get(key, [0]) if seeds is None else seeds)
    manifest_path = m.save()
    run_manifest(m, runner)
    return [manifest_path, *SUMMARIES[m.name](m)]
