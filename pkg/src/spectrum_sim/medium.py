"""One slot of multi-channel slotted ALOHA: collisions, ACKs and rates."""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelGainField, RadioConfig


@dataclass(frozen=True)
class Observation:
    """What one user learns from its own slot: an ACK bit and the rate."""

    ack: int
    realized_rate: float

    def __post_init__(self):
        if self.ack not in (0, 1):
            raise ValueError("ack must be 0 or 1")
        if (self.ack == 1) != (self.realized_rate > 0):
            raise ValueError("ack must be 1 exactly when realized_rate > 0")


def validate_actions(actions: np.ndarray, n_channels: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64)
    if actions.ndim != 1:
        raise ValueError("action profile must be a vector")
    if np.any(actions < 0) or np.any(actions > n_channels):
        raise ValueError(f"actions must lie in 0..{n_channels}")
    return actions


def resolve_slot(
    actions: np.ndarray, fld: ChannelGainField, radio: RadioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized slot resolution: (ack bits, realized rates) per user.

    A user is acknowledged iff it is the unique transmitter on its channel.
    """
    actions = validate_actions(actions, fld.n_channels)
    counts = np.bincount(actions, minlength=fld.n_channels + 1)
    ack = (actions > 0) & (counts[actions] == 1)
    rates = np.zeros(actions.shape[0])
    if np.any(ack):
        idx = np.nonzero(ack)[0]
        g = fld.gains[idx, actions[idx] - 1]
        rates[idx] = radio.bandwidth_hz * np.log2(1.0 + radio.snr * g)
    return ack.astype(np.int64), rates


def step_medium(
    actions: np.ndarray, fld: ChannelGainField, radio: RadioConfig
) -> list[Observation]:
    """Resolve one slot and package the per-user observations."""
    ack, rates = resolve_slot(actions, fld, radio)
    return [Observation(int(a), float(r)) for a, r in zip(ack, rates)]


def analytic_probabilities(p_t: float, load: int) -> tuple[float, float, float]:
    """Closed-form per-slot outcome probabilities for a symmetric channel
    carrying `load` users, each transmitting with probability `p_t`:
    (no transmission, success, collision).  The three always sum to 1.
    """
    if not (0.0 <= p_t <= 1.0):
        raise ValueError("p_t must lie in [0, 1]")
    if load < 1:
        raise ValueError("load must be a positive integer")
    p_nt = 1.0 - p_t
    p_succ = p_t * (1.0 - p_t) ** (load - 1)
    p_coll = p_t * (1.0 - (1.0 - p_t) ** (load - 1))
    return p_nt, p_succ, p_coll


def draw_transmit(rng: np.random.Generator, p_t: float) -> int:
    """Bernoulli(p_t) transmit gate."""
    if not (0.0 <= p_t <= 1.0):
        raise ValueError("p_t must lie in [0, 1]")
    return int(rng.random() < p_t)
