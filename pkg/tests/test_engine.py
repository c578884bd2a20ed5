"""Training/evaluation loop contracts: row schema, determinism,
conservation invariants and snapshots."""

import numpy as np
import pytest

from spectrum_sim import engine
from spectrum_sim.config import SimConfig

TINY = dict(iterations=3, episodes=2, slots=5, seed=11)


@pytest.fixture(scope="module")
def tiny_run():
    cfg = SimConfig(**TINY)
    snapshots, record = engine.run_training(cfg)
    return cfg, snapshots, record


def test_row_count_contract():
    cfg = SimConfig(n_users=2, n_channels=1, iterations=1, episodes=1, slots=2,
                    seed=1)
    _, record = engine.run_training(cfg)
    # 1 iteration x 1 episode x 2 slots x 2 users = 4 rows
    assert record.n_rows() == 4
    assert record.slot.tolist() == [1, 1, 2, 2]
    assert record.user.tolist() == [0, 1, 0, 1]


def test_rows_cover_every_slot(tiny_run):
    cfg, _, record = tiny_run
    expected = cfg.iterations * cfg.episodes * cfg.slots * cfg.n_users
    assert record.n_rows() == expected
    assert record.iteration.min() == 1
    assert record.iteration.max() == cfg.iterations
    assert set(record.user.tolist()) == set(range(cfg.n_users))


def test_ack_consistency(tiny_run):
    _, _, record = tiny_run
    # reward > 0 exactly when acked; silence is never acked
    assert np.all((record.reward > 0) == (record.ack == 1))
    assert not np.any((record.action == 0) & (record.ack == 1))


def test_slot_conservation(tiny_run):
    cfg, _, record = tiny_run
    # within a slot, at most one ACK per channel
    acts = record.action.reshape(-1, cfg.n_users)
    acks = record.ack.reshape(-1, cfg.n_users)
    for a_row, k_row in zip(acts, acks):
        for chan in range(1, cfg.n_channels + 1):
            on = a_row == chan
            assert k_row[on].sum() <= 1
            # a collision kills every packet on the channel
            if on.sum() > 1:
                assert k_row[on].sum() == 0


def test_deterministic_rerun_bytes(tmp_path):
    cfg = SimConfig(**TINY)
    paths = []
    for tag in ("a", "b"):
        _, record = engine.run_training(cfg)
        p = tmp_path / f"{tag}.csv"
        record.to_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_seed_changes_output():
    _, rec_a = engine.run_training(SimConfig(**TINY))
    _, rec_b = engine.run_training(SimConfig(**{**TINY, "seed": 12}))
    assert not np.array_equal(rec_a.action, rec_b.action)


def test_paired_fading_across_policies():
    # the fading stream is keyed by seed and phase only, so switching the
    # policy replays identical channel draws; with everyone silent the
    # reward depends only on fading, making the pairing observable in the
    # policy-independent fields
    base = SimConfig(**TINY)
    loop_a = engine._Loop(base, "train")
    loop_b = engine._Loop(SimConfig(**{**TINY, "policy": "random"}), "train")
    fa = engine.advance_gains(loop_a.field, loop_a.rng_fading)
    fb = engine.advance_gains(loop_b.field, loop_b.rng_fading)
    assert np.array_equal(fa.gains, fb.gains)


def test_evaluation_runs_and_is_greedy(tiny_run):
    cfg, snapshots, _ = tiny_run
    record = engine.run_evaluation(cfg, snapshots)
    assert record.n_rows() == cfg.episodes * cfg.slots * cfg.n_users
    assert np.all(record.iteration == 0)
    again = engine.run_evaluation(cfg, snapshots)
    assert np.array_equal(record.action, again.action)
    assert np.array_equal(record.reward, again.reward)


def test_empty_evaluation_defined(tiny_run):
    cfg, snapshots, _ = tiny_run
    cfg0 = SimConfig(**{**TINY, "eval_episodes": 0})
    record = engine.run_evaluation(cfg0, snapshots)
    assert record.n_rows() == 0
    assert record.aggregates["avg_reward"] == 0.0
    assert record.aggregates["collision_rate"] == 0.0


def test_evaluation_shape_mismatch_rejected(tiny_run):
    _, snapshots, _ = tiny_run
    bad = SimConfig(n_users=9, n_channels=4, iterations=1, episodes=1, slots=2)
    with pytest.raises(ValueError, match="K="):
        engine.run_evaluation(bad, snapshots)
    with pytest.raises(ValueError, match="snapshots"):
        engine.run_evaluation(SimConfig(**TINY), None)


def test_random_policy_needs_no_network():
    cfg = SimConfig(**{**TINY, "policy": "random"})
    snapshots, record = engine.run_training(cfg)
    assert snapshots["params1"] is None
    ev = engine.run_evaluation(cfg, snapshots)
    assert ev.n_rows() > 0


def test_aggregates_recomputable(tiny_run):
    cfg, _, record = tiny_run
    fresh = engine.recompute_aggregates(record, cfg)
    for key, value in fresh.items():
        assert record.aggregates[key] == value


def test_accumulated_reward():
    assert engine.accumulated_reward([1.0, 1.0, 1.0], 0.5) == pytest.approx(1.75)
    assert engine.accumulated_reward([], 0.9) == 0.0
    # frozen example: 1 + 0.95 * 0.3 = 1.285
    assert engine.accumulated_reward([1.0, 0.3], 0.95) == pytest.approx(1.285)
    with pytest.raises(ValueError):
        engine.accumulated_reward([1.0], 1.5)


def test_load_balance_statistic():
    cfg = SimConfig(n_users=4, n_channels=2, iterations=1, episodes=1, slots=4)
    rec = engine.MetricsRecord(
        run=np.zeros(16, np.int64),
        iteration=np.ones(16, np.int64),
        episode=np.ones(16, np.int64),
        slot=np.repeat(np.arange(1, 5), 4),
        user=np.tile(np.arange(4), 4),
        action=np.array([1, 1, 2, 2] * 3 + [1, 1, 1, 1], np.int64),
        ack=np.zeros(16, np.int64),
        reward=np.zeros(16),
    )
    # final quarter (last slot): all four users on channel 1
    max_load, ref, slack = engine.load_balance_statistic(rec, 4, 2)
    assert max_load == 4.0
    assert ref == 2.0
    assert slack == 2.0


def test_snapshot_round_trip(tmp_path, tiny_run):
    cfg, snapshots, _ = tiny_run
    path = tmp_path / "snap.npz"
    engine.save_snapshot(path, snapshots)
    loaded = engine.load_snapshot(path)
    assert np.array_equal(loaded["n_transmit"], snapshots["n_transmit"])
    for tag in ("params1", "params2"):
        for name, arr in snapshots[tag].arrays().items():
            assert np.array_equal(arr, getattr(loaded[tag], name))
    # evaluation from the reloaded snapshot is bit-identical
    a = engine.run_evaluation(cfg, snapshots)
    b = engine.run_evaluation(cfg, loaded)
    assert np.array_equal(a.reward, b.reward)


def test_share_weights_mode_runs():
    cfg = SimConfig(**{**TINY, "share_weights": True})
    snapshots, record = engine.run_training(cfg)
    assert snapshots["params1"].n_nets == 1
    ev = engine.run_evaluation(cfg, snapshots)
    assert ev.n_rows() > 0


def test_genie_mode_runs():
    cfg = SimConfig(**{**TINY, "observability": "genie"})
    _, record = engine.run_training(cfg)
    assert record.n_rows() > 0


def test_modal_profile():
    rec = engine.MetricsRecord(
        run=np.zeros(6, np.int64), iteration=np.zeros(6, np.int64),
        episode=np.zeros(6, np.int64), slot=np.zeros(6, np.int64),
        user=np.array([0, 1, 0, 1, 0, 1], np.int64),
        action=np.array([2, 1, 2, 1, 1, 1], np.int64),
        ack=np.zeros(6, np.int64), reward=np.zeros(6),
    )
    assert engine.modal_profile(rec, 2).tolist() == [2, 1]
