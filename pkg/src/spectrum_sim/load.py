"""ACK-statistics based channel load estimation.

Each agent counts its own transmissions and successes per channel over a
sliding window and inverts the ALOHA success ratio
(N_success / N_transmit ~ (1 - p_T)^(L-1)) into an integer load estimate.
No information about other users is observed beyond the agent's own ACKs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

#: sentinel for "no transmissions observed on this channel yet"
UNKNOWN = -1

# guards against ceil() pushing an exact power of (1 - p_T) up one notch
_CEIL_SLACK = 1e-9


@dataclass
class LoadCounters:
    """Per-channel transmission/success counters over a reset window."""

    n_channels: int
    window: int = 100
    n_transmit: np.ndarray = field(default=None)
    n_success: np.ndarray = field(default=None)
    slots_seen: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be a positive integer")
        if self.n_transmit is None:
            self.n_transmit = np.zeros(self.n_channels, dtype=np.int64)
        if self.n_success is None:
            self.n_success = np.zeros(self.n_channels, dtype=np.int64)

    def reset(self):
        self.n_transmit[:] = 0
        self.n_success[:] = 0
        self.slots_seen = 0

    def tick(self):
        """Advance the window clock by one slot, resetting when it expires."""
        self.slots_seen += 1
        if self.slots_seen >= self.window:
            self.reset()


def record(counters: LoadCounters, chan: int, transmitted: int, ack: int) -> LoadCounters:
    """Account for one slot on one channel.  An ACK without a transmission
    is an invariant violation and is rejected."""
    if ack and not transmitted:
        raise ValueError("ack=1 requires transmitted=1")
    if transmitted:
        counters.n_transmit[chan] += 1
        if ack:
            counters.n_success[chan] += 1
    return counters


def estimate_load(counters: LoadCounters, chan: int, p_t: float, n_users: int) -> int:
    """Invert the success ratio on `chan` into a load in {1..N} or UNKNOWN.

    Zero successes clamp to N (maximum congestion); zero transmissions
    yield UNKNOWN, which callers replace by the N/K prior.
    """
    if not (0.0 < p_t < 1.0):
        raise ValueError("load estimation requires 0 < p_t < 1")
    n_t = int(counters.n_transmit[chan])
    n_s = int(counters.n_success[chan])
    if n_t == 0:
        return UNKNOWN
    if n_s == 0:
        return n_users
    ratio = n_s / n_t
    est = 1 + math.ceil(math.log(ratio) / math.log(1.0 - p_t) - _CEIL_SLACK)
    return int(min(max(est, 1), n_users))


def estimate_all(counters: LoadCounters, p_t: float, n_users: int) -> np.ndarray:
    """Vector of per-channel load estimates (UNKNOWN where unobserved)."""
    return np.array(
        [estimate_load(counters, k, p_t, n_users) for k in range(counters.n_channels)],
        dtype=np.int64,
    )


def estimate_loads_array(n_transmit, n_success, p_t: float, n_users: int) -> np.ndarray:
    """Vectorized estimate_load over arrays of counters (any shape).

    Kept numerically identical to the scalar routine; the scalar form is
    the reference and the equivalence is tested.
    """
    if not (0.0 < p_t < 1.0):
        raise ValueError("load estimation requires 0 < p_t < 1")
    n_t = np.asarray(n_transmit, dtype=np.int64)
    n_s = np.asarray(n_success, dtype=np.int64)
    est = np.full(n_t.shape, UNKNOWN, dtype=np.int64)
    seen = n_t > 0
    est[seen & (n_s == 0)] = n_users
    ok = seen & (n_s > 0)
    if np.any(ok):
        ratio = n_s[ok] / n_t[ok]
        raw = 1 + np.ceil(np.log(ratio) / math.log(1.0 - p_t) - _CEIL_SLACK)
        est[ok] = np.clip(raw, 1, n_users).astype(np.int64)
    return est


def estimated_count_vector(estimates: np.ndarray, n_users: int, n_channels: int) -> np.ndarray:
    """Per-action user-count vector of length K+1 used as network input.

    Coordinate k >= 1 carries the load estimate for channel k (UNKNOWN
    replaced by the prior ceil(N/K)); coordinate 0 is the nonnegative
    residual of users assumed silent.
    """
    estimates = np.asarray(estimates)
    if estimates.shape != (n_channels,):
        raise ValueError(f"expected {n_channels} load estimates")
    prior = math.ceil(n_users / n_channels)
    loads = np.where(estimates == UNKNOWN, prior, estimates)
    vec = np.empty(n_channels + 1, dtype=np.int64)
    vec[1:] = loads
    vec[0] = max(0, n_users - int(loads.sum()))
    return vec
