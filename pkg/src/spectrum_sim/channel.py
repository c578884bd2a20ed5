"""Rayleigh fading channel gains and the per-slot throughput they permit.

Gains are kept as power gains |h|^2 with unit-mean exponential marginals
(Rayleigh amplitudes).  In time-correlated mode the underlying complex
Gaussian pair is retained so a first-order autoregression can be applied
without disturbing the marginal distribution.  A `fixed` mode with
user-supplied constant gains backs the enumerable oracle instances.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

MODES = ("iid", "ar1", "fixed")


def snr_linear(db: float) -> float:
    """Convert a decibel power ratio to a linear ratio."""
    if not math.isfinite(db):
        raise ValueError(f"SNR must be finite, got {db}")
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """Physical-layer constants shared by all users.

    Transmit power and noise variance are never represented separately;
    the single linear SNR subsumes their ratio.
    """

    snr_db: float = 35.0
    bandwidth_hz: float = 20e6
    doppler_hz: float = 100.0
    slot_duration_s: float = 1e-3

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.doppler_hz < 0:
            raise ValueError("doppler_hz must be nonnegative")
        if self.slot_duration_s <= 0:
            raise ValueError("slot_duration_s must be positive")

    @property
    def snr(self) -> float:
        return snr_linear(self.snr_db)

    def default_ar1_coefficient(self) -> float:
        """First-order approximation of Doppler-induced slot coherence."""
        return math.exp(-2.0 * math.pi * self.doppler_hz * self.slot_duration_s)


@dataclass(frozen=True)
class ChannelGainField:
    """Per-user, per-channel power gains for one slot."""

    gains: np.ndarray  # (N, K) nonnegative |h|^2
    mode: str = "iid"
    ar1_coefficient: float = 0.0
    # complex amplitudes, kept only in ar1 mode
    amplitudes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if not (0.0 <= self.ar1_coefficient < 1.0):
            raise ValueError("ar1_coefficient must lie in [0, 1)")
        if np.any(self.gains < 0):
            raise ValueError("gains must be nonnegative")

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_channels(self) -> int:
        return self.gains.shape[1]


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    # unit-variance circular complex Gaussian => |.|^2 is Exp(1)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def create_gain_field(
    n_users: int,
    n_channels: int,
    mode: str,
    rng: np.random.Generator | None = None,
    ar1_coefficient: float = 0.0,
    fixed_gains: np.ndarray | None = None,
) -> ChannelGainField:
    """Draw (or install) the initial gain field."""
    if mode == "fixed":
        if fixed_gains is None:
            raise ValueError("fixed mode requires fixed_gains")
        g = np.asarray(fixed_gains, dtype=float)
        if g.shape != (n_users, n_channels):
            raise ValueError(f"fixed_gains must have shape ({n_users}, {n_channels})")
        return ChannelGainField(gains=g.copy(), mode="fixed")
    if rng is None:
        raise ValueError(f"{mode} mode requires an rng")
    if mode == "iid":
        return ChannelGainField(gains=rng.exponential(1.0, (n_users, n_channels)), mode="iid")
    if mode == "ar1":
        amp = _complex_normal(rng, (n_users, n_channels))
        return ChannelGainField(
            gains=np.abs(amp) ** 2,
            mode="ar1",
            ar1_coefficient=ar1_coefficient,
            amplitudes=amp,
        )
    raise ValueError(f"unknown channel mode {mode!r}")


def advance_gains(fld: ChannelGainField, rng: np.random.Generator) -> ChannelGainField:
    """One slot of channel evolution; returns a fresh field.

    iid mode redraws independently; ar1 mode applies the autoregression
    to the complex amplitudes, preserving the exponential marginal;
    fixed mode is the identity.
    """
    if fld.mode == "fixed":
        return fld
    n, k = fld.gains.shape
    if fld.mode == "iid":
        return replace(fld, gains=rng.exponential(1.0, (n, k)))
    rho = fld.ar1_coefficient
    innov = _complex_normal(rng, (n, k))
    amp = rho * fld.amplitudes + math.sqrt(1.0 - rho * rho) * innov
    return replace(fld, gains=np.abs(amp) ** 2, amplitudes=amp)


def instantaneous_utility(
    actions: np.ndarray, fld: ChannelGainField, user: int, radio: RadioConfig
) -> float:
    """Throughput of `user` under the joint action, in bits/second.

    Nonzero only when the user transmits and no other user shares its
    channel; collisions destroy all packets on the channel.
    """
    actions = np.asarray(actions)
    if user >= actions.shape[0]:
        raise IndexError("user index out of range")
    a = int(actions[user])
    if a == 0:
        return 0.0
    others = np.delete(actions, user)
    if np.any(others == a):
        return 0.0
    g = fld.gains[user, a - 1]
    return radio.bandwidth_hz * math.log2(1.0 + radio.snr * g)
