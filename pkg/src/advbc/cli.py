"""Command line entry point: ``advbc <group> <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .adversarial import abc_train
from .bc import train_bc
from .data import load_dataset, make_nav_dataset, meta_field, sample_bandit_dataset, save_dataset
from .envs import make_env, reward_grid
from .evaluation import rollout, write_csv
from .experiments import DEFAULT_SEEDS, abc_config, bc_preset, run_experiment
from .policy import Policy

log = logging.getLogger("advbc")

NAV_VARIANTS = ("tl", "br", "combined", "random", "corrupted")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated list of integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="advbc", description="Behavioral cloning and adversarial behavioral cloning on toy tasks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    data = groups.add_parser("data", help="dataset generation").add_subparsers(dest="cmd", required=True)
    gen = data.add_parser("gen", help="generate a demonstration dataset")
    gen.add_argument("--env", choices=("bandit", "nav2d"), required=True)
    gen.add_argument("--variant", choices=NAV_VARIANTS, help="nav2d only")
    gen.add_argument("--n", type=int, required=True, help="samples (bandit) or trajectories per source (nav2d)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--mode-std", type=float, default=0.1, help="bandit mode width")
    gen.add_argument("--out", required=True)

    train = groups.add_parser("train", help="policy training").add_subparsers(dest="cmd", required=True)
    bc = train.add_parser("bc", help="behavioral cloning (MSE)")
    bc.add_argument("--data", required=True)
    bc.add_argument("--out", required=True)
    bc.add_argument("--env", choices=("bandit", "nav2d"), help="defaults to the env recorded in the dataset")
    bc.add_argument("--epochs", type=int)
    bc.add_argument("--seed", type=int, default=0)
    bc.add_argument("--loss-out", help="loss CSV (default: next to the checkpoint)")

    abc = train.add_parser("abc", help="adversarial behavioral cloning")
    abc.add_argument("--data", required=True)
    abc.add_argument("--out", required=True)
    abc.add_argument("--env", choices=("bandit", "nav2d"))
    abc.add_argument("--n", type=int, help="outer iterations N")
    abc.add_argument("--nd", type=int, help="buffer refresh period N_D")
    abc.add_argument("--seed", type=int, default=0)
    abc.add_argument("--diag-dir", help="diagnostics directory (default: <out dir>/diag)")

    ev = groups.add_parser("eval", help="evaluation").add_subparsers(dest="cmd", required=True)
    ro = ev.add_parser("rollout", help="roll out a checkpoint and record per-episode returns")
    ro.add_argument("--ckpt", required=True)
    ro.add_argument("--env", choices=("bandit", "nav2d"), required=True)
    ro.add_argument("--episodes", type=int, default=20)
    ro.add_argument("--seed", type=int, default=0)
    ro.add_argument("--out", required=True)

    rep = groups.add_parser("reproduce", help="run a named experiment end to end")
    rep.add_argument("experiment", choices=("fig1", "table1", "fig3-analog"))
    rep.add_argument("--out-dir", required=True)
    rep.add_argument("--seeds", type=_seed_list)

    env = groups.add_parser("env", help="environment utilities").add_subparsers(dest="cmd", required=True)
    dump = env.add_parser("dump-reward", help="write the reward landscape as CSV")
    dump.add_argument("--env", choices=("bandit", "nav2d"), required=True)
    dump.add_argument("--resolution", type=int, default=101)
    dump.add_argument("--out", required=True)
    return p


def _env_name(args, dataset) -> str:
    name = args.env or meta_field(dataset.meta, "env")
    if name not in ("bandit", "nav2d"):
        raise UsageError("cannot tell the environment from the dataset; pass --env")
    env = make_env(name)
    if (dataset.state_dim, dataset.action_dim) != (env.state_dim, env.action_dim):
        raise ValueError(
            f"dataset dims ({dataset.state_dim},{dataset.action_dim}) do not fit {name} "
            f"({env.state_dim},{env.action_dim})"
        )
    return name


def cmd_data_gen(args) -> None:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.env == "bandit":
        if args.variant is not None:
            raise UsageError("--variant applies to nav2d only")
        ds = sample_bandit_dataset(args.n, args.mode_std, args.seed)
    else:
        if args.variant is None:
            raise UsageError("nav2d needs --variant")
        ds = make_nav_dataset(args.variant, args.n, args.seed)
    save_dataset(ds, args.out)
    log.info("wrote %d transitions in %d trajectories to %s", len(ds), ds.n_traj, args.out)


def cmd_train_bc(args) -> None:
    ds = load_dataset(args.data)
    name = _env_name(args, ds)
    cfg = replace(bc_preset(name), seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    env = make_env(name)
    policy, losses = train_bc(ds, cfg, env.action_low, env.action_high)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save(out)
    loss_path = Path(args.loss_out) if args.loss_out else out.parent / "loss.csv"
    write_csv(loss_path, ["epoch", "mse"], enumerate(losses))
    log.info("bc: final mse %.6g, checkpoint %s", losses[-1], out)


def _diag_writer(diag_dir: Path):
    def write(diag):
        write_csv(diag_dir / "objective.csv", ["iter", "mean_logit"], diag.objective)
        write_csv(diag_dir / "disc_loss.csv", ["iter", "epoch", "bce"], diag.disc_loss)
        for it, grid in diag.sweeps.items():
            path = diag_dir / f"logit_sweep_{it}.csv"
            if not path.exists():
                write_csv(path, ["action", "logit"], grid)
        keys = ["iter", "size", "uniform", "policy", "pushed_logit_before", "pushed_logit_after"]
        write_csv(diag_dir / "buffer_stats.csv", keys, ([row[k] for k in keys] for row in diag.buffer_stats))

    return write


def cmd_train_abc(args) -> None:
    ds = load_dataset(args.data)
    name = _env_name(args, ds)
    cfg = abc_config(name, args.n, args.nd, args.seed)
    env = make_env(name)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    diag_dir = Path(args.diag_dir) if args.diag_dir else out.parent / "diag"
    diag_dir.mkdir(parents=True, exist_ok=True)
    for stale in diag_dir.glob("logit_sweep_*.csv"):
        stale.unlink()
    policy, _, diag = abc_train(ds, cfg, env.action_low, env.action_high, on_update=_diag_writer(diag_dir))
    policy.save(out)
    log.info("abc: final objective %.4g, checkpoint %s", diag.objective[-1][1], out)


def cmd_eval_rollout(args) -> None:
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    env = make_env(args.env)
    policy = Policy.load(args.ckpt, env.action_low, env.action_high)
    if policy.mlp.in_dim != env.state_dim:
        raise ValueError(f"checkpoint expects {policy.mlp.in_dim}-d states, {args.env} has {env.state_dim}")
    report = rollout(policy, env, args.episodes, args.seed, str(args.ckpt))
    report.save_csv(args.out)
    log.info("eval: mean return %.4g +- %.4g over %d episodes", report.mean, report.std, report.n_episodes)


def cmd_reproduce(args) -> None:
    key = args.experiment.replace("-", "_")
    seeds = args.seeds if args.seeds is not None else DEFAULT_SEEDS[key]
    for path in run_experiment(key, args.out_dir, seeds):
        print(path)


def cmd_env_dump(args) -> None:
    header, rows = reward_grid(args.env, args.resolution)
    write_csv(args.out, header, rows)


COMMANDS = {
    ("data", "gen"): cmd_data_gen,
    ("train", "bc"): cmd_train_bc,
    ("train", "abc"): cmd_train_abc,
    ("eval", "rollout"): cmd_eval_rollout,
    ("reproduce", None): cmd_reproduce,
    ("env", "dump-reward"): cmd_env_dump,
}


def run(argv) -> None:
    """Parse and execute one command; errors propagate as exceptions."""
    args = build_parser().parse_args([str(a) for a in argv])
    COMMANDS[(args.group, getattr(args, "cmd", None))](args)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        run(argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"advbc: error: {msg}", file=sys.stderr)
        return 1 if not isinstance(exc, UsageError) else 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
