"""End-to-end acceptance checks, one test per criterion.

Each test appends a single ``PASS``/``FAIL`` line to the acceptance log (shown
in the terminal summary) before asserting. The experiment runs go through the
same ``advbc reproduce`` entry point a user would call, so the nav2d checks
take tens of minutes on one core.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from advbc import cli
from advbc.adversarial import abc_train, local_maxima
from advbc.bc import train_bc
from advbc.data import make_nav_dataset, sample_bandit_dataset, start_action_stats
from advbc.envs import BanditEnv, Nav2dEnv, bandit_reward
from advbc.evaluation import read_csv
from advbc.experiments import BANDIT_ABC, BANDIT_BC, NAV_ABC, NAV_BC
from advbc.nn import finite_diff_check, init_mlp


def check(log, k, title, ok, detail, seconds, budget=None):
    timing = f"{seconds:.1f}s" + (f" (limit {budget:.0f}s)" if budget else "")
    line = f"criterion {k} {'PASS' if ok else 'FAIL'}: {title}: {detail}; {timing}"
    log.append(line)
    print(line)
    assert ok, line


def reproduce(name, out_dir, seeds):
    t = time.perf_counter()
    code = cli.main(["reproduce", name, "--out-dir", str(out_dir), "--seeds", ",".join(map(str, seeds))])
    assert code == 0, f"reproduce {name} exited with {code}"
    return time.perf_counter() - t


def table(path):
    header, rows = read_csv(path)
    return [dict(zip(header, r)) for r in rows]


def per_seed(row):
    return [float(x) for x in row["per_seed"].split(";")]


@pytest.fixture(scope="module")
def fig1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1_a")
    return out, reproduce("fig1", out, range(10))


# 1 -----------------------------------------------------------------------------


def test_criterion_1_gradient_oracle(acceptance_log):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        sizes = [int(rng.integers(1, 9)), int(rng.integers(1, 33)), int(rng.integers(1, 33)), int(rng.integers(1, 5))]
        m = init_mlp(sizes, "tanh", "identity", seed=i)
        worst = max(worst, finite_diff_check(m, rng.uniform(-1, 1, sizes[0]), eps=1e-5))
    dt = time.perf_counter() - t
    check(acceptance_log, 1, "gradient oracle", worst < 1e-4 and dt < 10,
          f"max relative error {worst:.2e} over 100 nets", dt, 10)


# 2 -----------------------------------------------------------------------------


def test_criterion_2_bandit_reward(acceptance_log):
    t = time.perf_counter()
    grid = np.linspace(-2, 2, 4001)
    r = bandit_reward(grid)
    peaks = len(local_maxima(r))
    lo, hi = bandit_reward(-1.0), bandit_reward(1.0)
    zero = bandit_reward(0.0)
    dt = time.perf_counter() - t
    ok = all(0.982 <= v <= 0.9821 for v in (lo, hi)) and zero < 1e-8 and peaks == 2 and dt < 1
    check(acceptance_log, 2, "bandit reward", ok,
          f"r(-1)={lo:.6f} r(1)={hi:.6f} r(0)={zero:.1e} maxima={peaks}", dt, 1)


# 3 -----------------------------------------------------------------------------


def test_criterion_3_fig1(acceptance_log, fig1_run):
    out, dt = fig1_run
    mean = float(table(out / "fig1_dataset.csv")[0]["mean"])
    actions = {(int(r["seed"]), r["algo"]): (float(r["action"]), float(r["reward"]))
               for r in table(out / "fig1_actions.csv")}
    maxima = {int(r["seed"]): [float(x) for x in r["maxima"].split(";") if x] for r in table(out / "fig1_sweep_maxima.csv")}
    good = 0
    for s in range(10):
        a_bc, r_bc = actions[(s, "bc")]
        a_abc, r_abc = actions[(s, "abc")]
        peaks = sorted(maxima[s])
        ok_bc = abs(a_bc - mean) <= 0.05 and r_bc < 0.01
        ok_abc = min(abs(a_abc - 1), abs(a_abc + 1)) <= 0.15 and r_abc >= 0.9
        ok_sweep = len(peaks) == 2 and abs(peaks[0] + 1) <= 0.15 and abs(peaks[1] - 1) <= 0.15
        good += ok_bc and ok_abc and ok_sweep
    check(acceptance_log, 3, "fig1 bandit", good >= 9 and dt < 120, f"{good}/10 seeds pass", dt, 120)


# 4 -----------------------------------------------------------------------------


def test_criterion_4_table1(acceptance_log, tmp_path):
    dt = reproduce("table1", tmp_path, range(5))
    rows = {(r["dataset"], r["algo"]): r for r in table(tmp_path / "table1.csv")}
    e_tl = float(rows[("tl", "expert")]["mean_return"])
    cells = {k: np.array(per_seed(v)) / e_tl for k, v in rows.items() if k[1] != "expert"}
    ok_seed = (
        (cells[("tl", "bc")] >= 0.8) & (cells[("tl", "abc")] >= 0.8)
        & (cells[("br", "bc")] >= 0.8) & (cells[("br", "abc")] >= 0.8)
        & (cells[("combined", "bc")] <= 0.05) & (cells[("combined", "abc")] >= 0.7)
    )
    summary = " ".join(f"{d}/{a}={cells[(d, a)].mean():.3f}" for d, a in cells)
    check(acceptance_log, 4, "table1 nav2d", int(ok_seed.sum()) >= 4 and dt < 900,
          f"{int(ok_seed.sum())}/5 seeds pass; mean ratios to E_tl {summary}", dt, 900)


# 5 -----------------------------------------------------------------------------


def test_criterion_5_corrupted(acceptance_log, tmp_path):
    dt = reproduce("fig3-analog", tmp_path, range(5))
    rows = {(r["dataset"], r["algo"]): r for r in table(tmp_path / "fig3_analog.csv")}
    bc = float(rows[("corrupted", "bc")]["ratio_to_clean"])
    abc = float(rows[("corrupted", "abc")]["ratio_to_clean"])
    stds = {a: float(rows[("corrupted", a)]["std"]) for a in ("bc", "abc")}
    ok = bc <= 0.3 and abc >= 0.7 and dt < 1200
    check(acceptance_log, 5, "corrupted nav2d", ok,
          f"bc {bc:.3f}x clean (std {stds['bc']:.1f}), abc {abc:.3f}x clean (std {stds['abc']:.1f})", dt, 1200)


# 6 -----------------------------------------------------------------------------


def test_criterion_6_mode_preserved(acceptance_log):
    t = time.perf_counter()
    clean = make_nav_dataset("tl", 20, seed=0)
    corrupted = make_nav_dataset("corrupted", 20, seed=0)
    stats = start_action_stats(clean, corrupted)
    same_mode = all(abs(r["mode_bin_clean"] - r["mode_bin_corrupted"]) <= 1 for r in stats)
    # +y is the coordinate pointing at the top-left target
    shift = stats[1]["mean_clean"] - stats[1]["mean_corrupted"]
    dt = time.perf_counter() - t
    detail = ", ".join(f"{'xy'[r['coord']]}: mode {r['mode_clean']:+.2f}->{r['mode_corrupted']:+.2f} "
                       f"mean {r['mean_clean']:+.3f}->{r['mean_corrupted']:+.3f}" for r in stats)
    check(acceptance_log, 6, "start-region mode", same_mode and shift >= 0.1 and dt < 60, detail, dt, 60)


# 7 -----------------------------------------------------------------------------


def test_criterion_7_offline(acceptance_log, monkeypatch, tmp_path):
    t = time.perf_counter()
    nav = make_nav_dataset("combined", 2, seed=0)
    bandit = sample_bandit_dataset(2000, seed=0)
    calls = {"n": 0}

    def counting(fn):
        def wrapped(*a, **kw):
            calls["n"] += 1
            return fn(*a, **kw)
        return wrapped

    for cls in (Nav2dEnv, BanditEnv):
        monkeypatch.setattr(cls, "step", counting(cls.step))
        monkeypatch.setattr(cls, "reset", counting(cls.reset))
    nav_abc = replace(NAV_ABC, n_iters=4, refresh_every=2, n_replay=2000, buffer_capacity=10_000,
                      disc_epochs_initial=1, disc_epochs_refresh=1, sweep_points=11)
    nav_box = (Nav2dEnv.action_low, Nav2dEnv.action_high)
    bandit_box = ([-2.0], [2.0])
    train_bc(nav, replace(NAV_BC, epochs=2), *nav_box)
    abc_train(nav, nav_abc, *nav_box)
    train_bc(bandit, replace(BANDIT_BC, epochs=2), *bandit_box)
    abc_train(bandit, replace(BANDIT_ABC, disc_epochs_initial=1, policy_steps_per_iter=5, sweep_points=11),
              *bandit_box)
    during_training = calls["n"]
    Nav2dEnv().reset(0)  # the counter itself works
    dt = time.perf_counter() - t
    check(acceptance_log, 7, "offline training", during_training == 0 and calls["n"] == 1,
          f"{during_training} env step/reset calls during training", dt)


# 8 -----------------------------------------------------------------------------


def test_criterion_8_determinism(acceptance_log, fig1_run, tmp_path):
    first, _ = fig1_run
    dt = reproduce("fig1", tmp_path, range(10))
    names = sorted(p.relative_to(first) for p in first.rglob("*.csv"))
    differ = [str(n) for n in names if (first / n).read_bytes() != (tmp_path / n).read_bytes()]
    same_set = names == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*.csv"))
    ok = same_set and not differ and len(names) > 0
    check(acceptance_log, 8, "reproducibility", ok,
          f"{len(names)} CSVs compared, {len(differ)} differ", dt)
