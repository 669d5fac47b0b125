import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advbc.data import (
    SOURCE_POLICY,
    SOURCE_UNIFORM,
    Dataset,
    DatasetFormatError,
    ExpertScript,
    ReplayBuffer,
    generate_expert_nav,
    generate_random_nav,
    histogram_mode,
    load_dataset,
    make_nav_dataset,
    meta_field,
    mix,
    push_policy_samples,
    sample_bandit_dataset,
    save_dataset,
    seed_replay,
    start_action_stats,
)
from advbc.envs import Nav2dEnv

# chi-square critical value, 19 degrees of freedom, upper tail 0.01
CHI2_19_P01 = 36.191


def chi_square_flat(values, low, high, bins=20):
    counts, _ = np.histogram(values, np.linspace(low, high, bins + 1))
    expected = len(values) / bins
    return float(np.sum((counts - expected) ** 2 / expected))


def tiny(n_traj=2, seed=0):
    return make_nav_dataset("tl", n_traj, seed=seed)


# bandit data -----------------------------------------------------------------


def test_bandit_dataset_is_bimodal():
    d = sample_bandit_dataset(10_000, 0.1, seed=0)
    a = d.actions[:, 0]
    assert d.state_dim == 1 and d.action_dim == 1 and len(d) == 10_000
    assert np.all(d.states == 0.0)
    assert abs(a.mean()) < 0.05
    assert abs(np.mean(a > 0) - 0.5) < 0.02
    assert np.mean(np.abs(np.abs(a) - 1.0) < 0.4) > 0.99


def test_bandit_dataset_rejects_bad_args():
    with pytest.raises(ValueError):
        sample_bandit_dataset(0)
    with pytest.raises(ValueError):
        sample_bandit_dataset(10, mode_std=0.0)


# expert ----------------------------------------------------------------------


def test_expert_first_action_points_up():
    expert = ExpertScript(np.array([0.05, 0.95]), noise_std=0.05)
    rng = np.random.default_rng(0)
    angles = []
    for _ in range(200):
        a = expert.act(np.array([0.05, 0.05]), rng)
        angles.append(np.degrees(np.arctan2(abs(a[0]), a[1])))
    assert np.mean(np.array(angles) < 15.0) > 0.99


def test_expert_nav_avoids_kill_square_and_scores():
    d = generate_expert_nav("tl", 3, seed=1)
    env = Nav2dEnv()
    assert d.n_traj == 3 and len(d) == 3000
    assert not any(env.in_kill_square(s) for s in d.states)
    assert float(meta_field(d.meta, "mean_return")) >= 850
    assert np.all(np.abs(d.actions) <= 1.0)


def test_expert_nav_rejects_unknown_target():
    with pytest.raises(ValueError):
        generate_expert_nav("tr", 1)


def test_br_mirrors_tl():
    tl, br = make_nav_dataset("tl", 2, seed=3), make_nav_dataset("br", 2, seed=3)
    assert tl.states[-1, 1] > 0.9 and br.states[-1, 0] > 0.9


# random ----------------------------------------------------------------------


def test_random_actions_uniform():
    d = generate_random_nav(100, seed=0)
    assert len(d) >= 100_000 * 0.9
    assert np.all(np.abs(d.actions) <= 1.0)
    np.testing.assert_allclose(d.actions.mean(axis=0), [0.0, 0.0], atol=0.01)
    for k in range(2):
        assert chi_square_flat(d.actions[:, k], -1, 1) < CHI2_19_P01


def test_random_runs_to_termination():
    env = Nav2dEnv()
    for s, a in generate_random_nav(5, seed=2).trajectories():
        last = np.clip(s[-1] + env.dt * a[-1], 0.0, 1.0)
        assert len(s) == env.max_steps or env.in_kill_square(last)


def test_generation_is_seed_deterministic():
    assert generate_random_nav(2, seed=9) == generate_random_nav(2, seed=9)
    assert tiny(seed=4) == tiny(seed=4)
    assert tiny(seed=4) != tiny(seed=5)


# mix -------------------------------------------------------------------------


def test_mix_sizes_and_meta():
    a, b = make_nav_dataset("tl", 2), make_nav_dataset("br", 3)
    m = mix(a, b)
    assert len(m) == len(a) + len(b)
    assert m.n_traj == 5
    assert "variant=tl" in m.meta and "variant=br" in m.meta


def test_mix_with_empty_is_identity():
    a = tiny()
    assert mix(a, Dataset.empty(2, 2)) == a
    assert mix(Dataset.empty(2, 2), a) == a


def test_mix_dim_mismatch():
    with pytest.raises(ValueError):
        mix(tiny(), sample_bandit_dataset(5))


def test_combined_and_corrupted_variants():
    c = make_nav_dataset("combined", 2, seed=0)
    assert c.n_traj == 4
    k = make_nav_dataset("corrupted", 2, seed=0)
    clean = make_nav_dataset("tl", 2, seed=0)
    assert k.n_traj == 4
    # the clean dataset is exactly the expert half of the corrupted one
    assert np.array_equal(k.states[: len(clean)], clean.states)
    with pytest.raises(ValueError):
        make_nav_dataset("diagonal", 1)


# mode preservation -----------------------------------------------------------


def test_corruption_preserves_start_mode_but_moves_mean():
    clean = make_nav_dataset("tl", 20, seed=0)
    corrupted = make_nav_dataset("corrupted", 20, seed=0)
    stats = start_action_stats(clean, corrupted)
    for row in stats:
        assert abs(row["mode_bin_clean"] - row["mode_bin_corrupted"]) <= 1
    up = stats[1]  # +y points at the top-left target
    assert up["mean_clean"] - up["mean_corrupted"] >= 0.1


def test_histogram_mode_grid():
    counts, edges, mode = histogram_mode([0.05, 0.07, -0.5], 0.1)
    assert len(counts) == 20 and edges[0] == -1.0 and edges[-1] == 1.0
    assert mode == 10 and counts.sum() == 3


# replay buffer ---------------------------------------------------------------


def test_seed_replay_bandit_uniform():
    buf = seed_replay(np.zeros((1, 1)), [-2.0], [2.0], 10_000, seed=0)
    a = buf.actions[:, 0]
    assert len(buf) == 10_000
    assert np.all((a >= -2) & (a <= 2))
    assert chi_square_flat(a, -2, 2) < CHI2_19_P01


def test_seed_replay_states_come_from_dataset():
    d = tiny()
    buf = seed_replay(d.states, [-1, -1], [1, 1], 500, seed=1)
    known = {tuple(s) for s in d.states}
    assert all(tuple(s) in known for s in buf.states[: buf.size])
    assert buf.composition() == {"size": 500, "uniform": 500, "policy": 0}


def test_seed_replay_empty_states():
    with pytest.raises(ValueError):
        seed_replay(np.zeros((0, 2)), [-1, -1], [1, 1], 10)


def test_fifo_keeps_newest():
    buf = ReplayBuffer(1, 1, capacity=10)
    buf.add_batch(np.arange(15.0).reshape(-1, 1), np.arange(15.0).reshape(-1, 1), SOURCE_UNIFORM)
    assert [float(t.state[0]) for t in buf.entries] == list(map(float, range(5, 15)))


@settings(max_examples=50, deadline=None)
@given(cap=st.integers(1, 20), pushes=st.lists(st.integers(1, 12), min_size=1, max_size=6))
def test_fifo_matches_reference(cap, pushes):
    buf = ReplayBuffer(1, 1, cap)
    ref, counter = [], 0
    for n in pushes:
        vals = np.arange(counter, counter + n, dtype=float).reshape(-1, 1)
        counter += n
        buf.add_batch(vals, vals, SOURCE_POLICY)
        ref = (ref + vals[:, 0].tolist())[-cap:]
    assert [float(t.state[0]) for t in buf.entries] == ref
    assert len(buf) == len(ref)


def test_push_policy_samples():
    d = tiny()
    buf = seed_replay(d.states, [-1, -1], [1, 1], 100, seed=0, capacity=1000)

    def policy(states):
        return np.tanh(states * 3.0)

    states, actions = push_policy_samples(buf, policy, d.states, 50, seed=1)
    np.testing.assert_array_equal(actions, policy(states))
    comp = buf.composition()
    assert comp == {"size": 150, "uniform": 100, "policy": 50}
    assert comp["policy"] / comp["size"] == pytest.approx(50 / (50 + 100))


def test_buffer_sample_empty():
    with pytest.raises(ValueError):
        ReplayBuffer(1, 1, 5).sample(3, np.random.default_rng(0))


# serialization ---------------------------------------------------------------


def test_round_trip(tmp_path):
    d = make_nav_dataset("combined", 2, seed=7)
    save_dataset(d, tmp_path / "d.txt")
    assert load_dataset(tmp_path / "d.txt") == d


def test_round_trip_bandit(tmp_path):
    d = sample_bandit_dataset(50, seed=1)
    save_dataset(d, tmp_path / "b.txt")
    back = load_dataset(tmp_path / "b.txt")
    assert back == d and back.actions.tobytes() == d.actions.tobytes()


@settings(max_examples=25, deadline=None)
@given(
    lengths=st.lists(st.integers(1, 4), min_size=1, max_size=4),
    values=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=48, max_size=48),
)
def test_round_trip_property(tmp_path_factory, lengths, values):
    n = sum(lengths)
    v = np.array((values * 2)[: n * 3]).reshape(n, 3)
    bounds = list(np.cumsum([0] + lengths[:-1]))
    d = Dataset(v[:, :2], v[:, 2:], [int(b) for b in bounds], "env=test")
    path = tmp_path_factory.mktemp("rt") / "d.txt"
    save_dataset(d, path)
    assert load_dataset(path) == d


def test_truncated_file_is_rejected(tmp_path):
    path = tmp_path / "d.txt"
    save_dataset(tiny(1), path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(DatasetFormatError, match=r"d\.txt:\d+"):
        load_dataset(path)


def test_dim_mismatch_is_rejected(tmp_path):
    path = tmp_path / "d.txt"
    path.write_text("dataset 2 2 1\ntraj 1\n0.1 0.2 0.3 | 0.0 0.0\n")
    with pytest.raises(DatasetFormatError, match=":3:"):
        load_dataset(path)


@pytest.mark.parametrize(
    "text",
    ["", "datasets 1 1 1\n", "dataset 1 1 2\ntraj 1\n0.0 | 0.0\n", "dataset 1 1 1\ntraj x\n", "dataset 1 1 1\ntraj 1\n0.0 0.0\n"],
)
def test_malformed_files(tmp_path, text):
    path = tmp_path / "d.txt"
    path.write_text(text)
    with pytest.raises(DatasetFormatError):
        load_dataset(path)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.zeros((3, 1)), [0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.zeros((2, 1)), [1])
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.zeros((1, 1)), [0])
