"""Fading model and per-user utility."""

import math

import numpy as np
import pytest

from spectrum_sim.channel import (
    RadioConfig,
    advance_gains,
    create_gain_field,
    instantaneous_utility,
    snr_linear,
)


def test_snr_linear_frozen_values():
    assert snr_linear(0.0) == 1.0
    assert snr_linear(10.0) == pytest.approx(10.0)
    assert snr_linear(35.0) == pytest.approx(3162.2776601683795, rel=1e-12)


def test_radio_validation():
    with pytest.raises(ValueError):
        RadioConfig(bandwidth_hz=0.0)
    with pytest.raises(ValueError):
        RadioConfig(snr_db=math.inf)


def test_default_ar1_coefficient():
    radio = RadioConfig(doppler_hz=100.0, slot_duration_s=1e-3)
    assert radio.default_ar1_coefficient() == pytest.approx(
        math.exp(-2.0 * math.pi * 0.1), rel=1e-12
    )


def test_iid_gains_unit_mean():
    rng = np.random.default_rng(0)
    fld = create_gain_field(200, 50, "iid", rng=rng)
    total = np.zeros_like(fld.gains)
    draws = 20
    for _ in range(draws):
        fld = advance_gains(fld, rng)
        total += fld.gains
    assert (total / draws).mean() == pytest.approx(1.0, abs=0.02)


def test_ar1_preserves_marginal_and_correlates():
    rng = np.random.default_rng(1)
    rho = 0.9
    fld = create_gain_field(400, 40, "ar1", rng=rng, ar1_coefficient=rho)
    prev = fld.gains.copy()
    means, corrs = [], []
    for _ in range(30):
        fld = advance_gains(fld, rng)
        means.append(fld.gains.mean())
        corrs.append(np.corrcoef(prev.ravel(), fld.gains.ravel())[0, 1])
        prev = fld.gains.copy()
    assert np.mean(means) == pytest.approx(1.0, abs=0.02)
    # power gains correlate at roughly rho^2 per step
    assert np.mean(corrs) == pytest.approx(rho ** 2, abs=0.05)


def test_ar1_rejects_unit_coefficient():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        create_gain_field(2, 2, "ar1", rng=rng, ar1_coefficient=1.0)


def test_fixed_mode_identity():
    g = np.array([[1.0, 2.0], [0.5, 1.5]])
    fld = create_gain_field(2, 2, "fixed", fixed_gains=g)
    fld2 = advance_gains(fld, np.random.default_rng(3))
    assert np.array_equal(fld2.gains, g)


def test_instantaneous_utility_collision_and_rate():
    g = np.array([[1.0, 2.0], [0.5, 1.5], [4.0, 0.25]])
    fld = create_gain_field(3, 2, "fixed", fixed_gains=g)
    radio = RadioConfig(snr_db=0.0, bandwidth_hz=1.0)
    actions = np.array([1, 1, 2])
    # users 0 and 1 collide on channel 1, user 2 is alone on channel 2
    assert instantaneous_utility(actions, fld, 0, radio) == 0.0
    assert instantaneous_utility(actions, fld, 1, radio) == 0.0
    assert instantaneous_utility(actions, fld, 2, radio) == pytest.approx(
        math.log2(1.25)
    )
    # silence earns nothing
    assert instantaneous_utility(np.array([0, 0, 0]), fld, 0, radio) == 0.0
