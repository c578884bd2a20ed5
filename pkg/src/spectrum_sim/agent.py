"""Per-user policy: deterministic top-M / least-load channel selection,
ALOHA transmit gating, double-Q target construction and history upkeep.

The channel choice is the heart of the scheme: restrict attention to the
M channels with the highest Q-values, then transmit on the one whose
estimated load is smallest.  Q ties prefer the lower channel index; load
ties prefer the higher Q-value, then the lower index.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import load as load_mod
from . import network
from .channel import RadioConfig
from .medium import Observation


class ComparisonCounter:
    """Counts key comparisons made by the bounded-heap selection."""

    def __init__(self):
        self.count = 0


def _sift_up(heap, pos, counter):
    item = heap[pos]
    while pos > 0:
        parent = (pos - 1) >> 1
        counter.count += 1
        if item < heap[parent]:
            heap[pos] = heap[parent]
            pos = parent
        else:
            break
    heap[pos] = item


def _sift_down(heap, counter):
    n = len(heap)
    pos = 0
    item = heap[0]
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n:
            counter.count += 1
            if heap[child + 1] < heap[child]:
                child += 1
        counter.count += 1
        if heap[child] < item:
            heap[pos] = heap[child]
            pos = child
        else:
            break
    heap[pos] = item


def select_channel(q, loads, m, counter: ComparisonCounter | None = None) -> int:
    """Least-loaded channel among the M channels with the largest Q-values.

    `q` is the full K+1 Q-vector (coordinate 0, no-transmit, is excluded
    from candidacy); `loads` has one entry per channel (1-based channel k
    at loads[k-1]).  The top-M set is maintained in a min-heap of bounded
    size M, so the scan costs O(K log M) comparisons.
    """
    q = np.asarray(q, dtype=float)
    k_chan = q.shape[0] - 1
    if not 1 <= m:
        raise ValueError("m must be at least 1")
    if m > k_chan:
        raise ValueError(f"m={m} exceeds the number of channels {k_chan}")
    if len(loads) != k_chan:
        raise ValueError("need one load per channel")
    if counter is None:
        counter = ComparisonCounter()

    # keys (q, -index): the heap root is the weakest member of the top-M
    # set, and among equal q the higher index is evicted first.
    heap: list[tuple[float, int]] = []
    for k in range(1, k_chan + 1):
        key = (float(q[k]), -k)
        if len(heap) < m:
            heap.append(key)
            _sift_up(heap, len(heap) - 1, counter)
        else:
            counter.count += 1
            if key > heap[0]:
                heap[0] = key
                _sift_down(heap, counter)

    best = None
    for qv, negk in heap:
        k = -negk
        cand = (loads[k - 1], -qv, k)
        if best is None:
            best = cand
        else:
            counter.count += 1
            if cand < best:
                best = cand
    return best[2]


def select_channel_exhaustive(q, loads, m) -> int:
    """Reference definition by full sort; oracle for the heap version."""
    q = np.asarray(q, dtype=float)
    k_chan = q.shape[0] - 1
    if m > k_chan:
        raise ValueError(f"m={m} exceeds the number of channels {k_chan}")
    ranked = sorted(range(1, k_chan + 1), key=lambda k: (-q[k], k))
    top = ranked[:m]
    return min(top, key=lambda k: (loads[k - 1], -q[k], k))


def gated_action(
    q,
    loads,
    m: int,
    p_t: float,
    epsilon: float,
    rng_gate: np.random.Generator,
    rng_explore: np.random.Generator,
) -> int:
    """The per-slot strategy: transmit with probability p_T on the
    selected channel (or, with probability epsilon during training, on a
    uniformly random channel), otherwise stay silent."""
    if rng_gate.random() >= p_t:
        return 0
    if epsilon > 0.0 and rng_explore.random() < epsilon:
        k_chan = len(q) - 1
        return int(rng_explore.integers(1, k_chan + 1))
    return select_channel(q, loads, m)


def build_double_q_target(r: float, q1_next, q2_next, gamma: float) -> float:
    """Double-Q bootstrap: the first network selects the next action, the
    second evaluates it.  Argmax ties resolve to the lowest index."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    q1_next = np.asarray(q1_next, dtype=float)
    q2_next = np.asarray(q2_next, dtype=float)
    if q1_next.shape != q2_next.shape:
        raise ValueError("q vectors must have equal length")
    return float(r + gamma * q2_next[int(np.argmax(q1_next))])


def reward_from_observation(obs: Observation, radio: RadioConfig) -> float:
    """Realized rate normalized by the nominal unit-gain rate
    B*log2(1 + SNR); zero without an ACK.  Values above 1 occur for
    better-than-nominal fading draws."""
    if obs.ack == 0:
        return 0.0
    return obs.realized_rate / (radio.bandwidth_hz * math.log2(1.0 + radio.snr))


def normalize_rates(rates: np.ndarray, radio: RadioConfig) -> np.ndarray:
    """Vectorized form of reward_from_observation for a whole slot."""
    return np.asarray(rates) / (radio.bandwidth_hz * math.log2(1.0 + radio.snr))


@dataclass
class AgentHistory:
    """Aligned per-slot streams of actions, observations and load vectors."""

    actions: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    loads: list = field(default_factory=list)

    def __len__(self):
        return len(self.actions)

    def check_aligned(self):
        if not (len(self.actions) == len(self.observations) == len(self.loads)):
            raise RuntimeError("history streams misaligned")


@dataclass
class AgentState:
    """Everything one user owns: two networks, recurrent state, counters,
    history and the selection parameters."""

    params1: network.QNetworkParams
    params2: network.QNetworkParams
    lstm_state: tuple
    counters: load_mod.LoadCounters
    history: AgentHistory
    m: int
    exploration_epsilon: float = 0.0

    def __post_init__(self):
        k_chan = self.params1.spec.n_channels
        if not 1 <= self.m <= k_chan:
            raise ValueError(f"m must lie in 1..{k_chan}")
        if not 0.0 <= self.exploration_epsilon <= 1.0:
            raise ValueError("exploration_epsilon must lie in [0, 1]")


def make_agent(
    spec: network.NetSpec,
    m: int,
    rng_init: np.random.Generator,
    window: int = 100,
    exploration_epsilon: float = 0.0,
) -> AgentState:
    params1 = network.init_params(spec, 1, rng_init)
    params2 = network.sync_params(params1)
    h = np.zeros(spec.hidden)
    return AgentState(
        params1=params1,
        params2=params2,
        lstm_state=(h, h.copy()),
        counters=load_mod.LoadCounters(n_channels=spec.n_channels, window=window),
        history=AgentHistory(),
        m=m,
        exploration_epsilon=exploration_epsilon,
    )


def act(
    state: AgentState,
    x,
    p_t: float,
    rng: np.random.Generator,
    loads=None,
    training: bool = False,
):
    """One slot of the single-agent policy.

    Runs the selection network on the input, advances the recurrent
    state, and applies the ALOHA gate.  Returns (action, q).  `loads`
    defaults to the agent's own current estimates.
    """
    q, state.lstm_state = network.forward_single(state.params1, x, state.lstm_state)
    if loads is None:
        n_users = int(np.asarray(x).sum())
        est = load_mod.estimate_all(state.counters, min(max(p_t, 1e-9), 1 - 1e-9),
                                    max(n_users, 1))
        prior = math.ceil(max(n_users, 1) / state.counters.n_channels)
        loads = np.where(est == load_mod.UNKNOWN, prior, est)
    eps = state.exploration_epsilon if training else 0.0
    action = gated_action(q, loads, state.m, p_t, eps, rng, rng)
    return action, q


def append_history(state: AgentState, action: int, obs: Observation, loads) -> AgentState:
    """Append one slot record and fold the outcome into the counters."""
    state.history.check_aligned()
    state.history.actions.append(int(action))
    state.history.observations.append(obs)
    state.history.loads.append(np.asarray(loads).copy())
    if action > 0:
        load_mod.record(state.counters, action - 1, 1, obs.ack)
    state.history.check_aligned()
    return state
