"""Channel selection, gating, targets and the single-agent wrapper."""

import itertools

import numpy as np
import pytest

from spectrum_sim import agent as agent_mod
from spectrum_sim import network
from spectrum_sim.agent import (
    ComparisonCounter,
    build_double_q_target,
    gated_action,
    make_agent,
    normalize_rates,
    reward_from_observation,
    select_channel,
    select_channel_exhaustive,
)
from spectrum_sim.channel import RadioConfig
from spectrum_sim.medium import Observation


def test_heap_matches_exhaustive_small_grids():
    # every load profile in {0..3}^K for small K and all valid M
    rng = np.random.default_rng(0)
    for k in (2, 3, 4):
        q = rng.normal(size=k + 1)
        for m in range(1, min(k, 3) + 1):
            for loads in itertools.product(range(4), repeat=k):
                assert select_channel(q, loads, m) == select_channel_exhaustive(
                    q, loads, m
                )


def test_heap_matches_exhaustive_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(10 ** 4):
        k = int(rng.integers(2, 21))
        m = int(rng.integers(1, min(k, 8) + 1))
        q = rng.normal(size=k + 1)
        if rng.random() < 0.3:
            # force ties in q
            q = np.round(q)
        loads = rng.integers(0, 5, k)
        assert select_channel(q, loads, m) == select_channel_exhaustive(q, loads, m)


def test_rank_invariance():
    # any strictly increasing transform of q leaves the choice unchanged
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(2, 12))
        m = int(rng.integers(1, k + 1))
        q = rng.normal(size=k + 1)
        loads = rng.integers(0, 4, k)
        base = select_channel(q, loads, m)
        for f in (lambda z: 3 * z + 1, np.tanh, lambda z: z ** 3):
            assert select_channel(f(q), loads, m) == base


def test_tie_breaks():
    # equal q everywhere: the top-M set is the M lowest indices
    q = np.zeros(5)
    assert select_channel(q, [5, 5, 5, 5], 2) == 1
    # load tie inside the top-M set prefers the higher q
    q = np.array([0.0, 1.0, 2.0, 0.5, 0.1])
    assert select_channel(q, [3, 3, 3, 3], 2) == 2
    # load decides against higher q
    assert select_channel(q, [0, 3, 3, 3], 2) == 1


def test_select_rejects_m_too_large():
    with pytest.raises(ValueError):
        select_channel(np.zeros(4), [0, 0, 0], 4)


def test_comparison_budget():
    rng = np.random.default_rng(3)
    for _ in range(500):
        k = int(rng.integers(2, 21))
        m = int(rng.integers(1, min(k, 8) + 1))
        counter = ComparisonCounter()
        select_channel(rng.normal(size=k + 1), rng.integers(0, 5, k), m, counter)
        assert counter.count <= 4 * k * np.log2(m + 1)


def test_gated_action_respects_gate_and_epsilon():
    q = np.array([0.0, 3.0, 1.0])
    gate = np.random.default_rng(4)
    explore = np.random.default_rng(5)
    # p_t = 0: always silent
    for _ in range(20):
        assert gated_action(q, [0, 0], 1, 0.0, 0.0, gate, explore) == 0
    # p_t = 1, no exploration: deterministic selection
    for _ in range(20):
        assert gated_action(q, [0, 0], 1, 1.0, 0.0, gate, explore) == 1
    # full exploration covers both channels
    seen = {gated_action(q, [0, 0], 1, 1.0, 1.0, gate, explore) for _ in range(50)}
    assert seen == {1, 2}


def test_double_q_target():
    q1 = np.array([0.0, 5.0, 1.0])
    q2 = np.array([0.3, -1.0, 9.0])
    # network 1 selects action 1, network 2 evaluates it
    assert build_double_q_target(0.5, q1, q2, 0.9) == pytest.approx(0.5 + 0.9 * -1.0)
    # identical networks reduce to the standard max target
    assert build_double_q_target(0.0, q2, q2, 1.0) == pytest.approx(q2.max())
    # argmax ties resolve to the lowest index
    assert build_double_q_target(0.0, np.array([1.0, 1.0]), np.array([7.0, 8.0]), 1.0) == 7.0


def test_reward_normalization():
    radio = RadioConfig(snr_db=35.0, bandwidth_hz=20e6)
    nominal = 20e6 * np.log2(1.0 + 3162.2776601683795)
    obs = Observation(ack=1, realized_rate=nominal)
    assert reward_from_observation(obs, radio) == pytest.approx(1.0, rel=1e-9)
    assert reward_from_observation(Observation(ack=0, realized_rate=0.0), radio) == 0.0
    rates = np.array([0.0, nominal, 2 * nominal])
    assert np.allclose(normalize_rates(rates, radio), [0.0, 1.0, 2.0], rtol=1e-9)


def test_agent_round_trip():
    spec = network.NetSpec(n_channels=3, hidden=6, value_width=4, adv_width=4)
    state = make_agent(spec, m=2, rng_init=np.random.default_rng(6), window=50)
    rng = np.random.default_rng(7)
    x = np.array([4.0, 2.0, 2.0, 2.0])
    for _ in range(5):
        action, q = agent_mod.act(state, x, p_t=1.0, rng=rng)
        assert 1 <= action <= 3
        assert q.shape == (4,)
        obs = Observation(ack=1, realized_rate=1.0)
        agent_mod.append_history(state, action, obs, np.array([2, 2, 2]))
        state.counters.tick()
    assert len(state.history) == 5
    assert state.counters.n_transmit.sum() == 5
    assert state.counters.n_success.sum() == 5
