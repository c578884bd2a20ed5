"""Training/evaluation orchestration: iterations x episodes x slots x users.

Every slot proceeds as a barrier-synchronized round: all agents choose an
action from their own network and load estimates, the medium resolves
collisions, and every agent folds its own ACK back into its counters.
Training happens once per iteration on the episodes just collected, then
the evaluation network is overwritten by the trained one.

Everything is a deterministic function of the SimConfig (including its
seed); identical configs produce byte-identical CSV output.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import agent as agent_mod
from . import baselines, network
from . import load as load_mod
from . import rng as rng_mod
from .channel import advance_gains, create_gain_field
from .config import SimConfig
from .medium import resolve_slot

ROWS_HEADER = "run,iteration,episode,slot,user,action,ack,reward"
SUMMARY_HEADER = "run,metric,value"

_EST_P_MIN, _EST_P_MAX = 1e-6, 1.0 - 1e-6


@dataclass
class MetricsRecord:
    """Per-slot rows plus aggregate statistics of one run."""

    run: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    iteration: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    episode: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    slot: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    user: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    action: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    ack: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    reward: np.ndarray = field(default_factory=lambda: np.empty(0, float))
    aggregates: dict = field(default_factory=dict)

    def n_rows(self) -> int:
        return self.run.shape[0]

    def columns(self):
        return (self.run, self.iteration, self.episode, self.slot,
                self.user, self.action, self.ack, self.reward)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(ROWS_HEADER + "\n")
            cols = self.columns()
            for i in range(self.n_rows()):
                ints = ",".join(str(int(c[i])) for c in cols[:7])
                fh.write(f"{ints},{repr(float(self.reward[i]))}\n")

    def summary_to_csv(self, path, run_id: int):
        with open(path, "w", newline="") as fh:
            fh.write(SUMMARY_HEADER + "\n")
            for key in sorted(self.aggregates):
                fh.write(f"{run_id},{key},{repr(float(self.aggregates[key]))}\n")


def accumulated_reward(rewards, gamma: float) -> float:
    """Discounted sum over a reward sequence: sum_t gamma^(t-1) r_t."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        return 0.0
    weights = gamma ** np.arange(rewards.size)
    return float(weights @ rewards)


def per_slot_true_loads(record: MetricsRecord, n_users: int, n_channels: int) -> np.ndarray:
    """(S, K) matrix of true per-channel transmitter counts, one row per
    logged slot, in chronological order."""
    n = record.n_rows()
    if n == 0:
        return np.zeros((0, n_channels), dtype=np.int64)
    if n % n_users != 0:
        raise ValueError("row count is not a multiple of the user count")
    actions = record.action.reshape(-1, n_users)
    s = actions.shape[0]
    loads = np.zeros((s, n_channels + 1), dtype=np.int64)
    np.add.at(loads, (np.repeat(np.arange(s), n_users), actions.ravel()), 1)
    return loads[:, 1:]


def load_balance_statistic(
    record: MetricsRecord, n_users: int, n_channels: int
) -> tuple[float, float, float]:
    """Time-averaged maximum true channel load over the final quarter of
    the run, the N/K reference, and their difference."""
    loads = per_slot_true_loads(record, n_users, n_channels)
    reference = n_users / n_channels
    if loads.shape[0] == 0:
        return 0.0, reference, -reference
    tail = max(1, loads.shape[0] // 4)
    max_load = float(loads[-tail:].max(axis=1).mean())
    return max_load, reference, max_load - reference


def recompute_aggregates(record: MetricsRecord, cfg: SimConfig) -> dict:
    """Row-derivable aggregates, exactly as stored during the run."""
    out = {}
    n = record.n_rows()
    if n == 0:
        return {
            "avg_reward": 0.0, "success_rate": 0.0, "collision_rate": 0.0,
            "channel_utilization": 0.0, "mean_discounted_return": 0.0,
            "max_true_load": 0.0, "min_true_load": 0.0,
            "balance_max_load": 0.0, "balance_slack": -cfg.n_users / cfg.n_channels,
        }
    out["avg_reward"] = float(record.reward.mean())
    out["success_rate"] = float(record.ack.mean())
    transmissions = int((record.action > 0).sum())
    collided = int(((record.action > 0) & (record.ack == 0)).sum())
    out["collision_rate"] = collided / transmissions if transmissions else 0.0
    loads = per_slot_true_loads(record, cfg.n_users, cfg.n_channels)
    slots = loads.shape[0]
    out["channel_utilization"] = float(record.ack.sum()) / (slots * cfg.n_channels)
    out["max_true_load"] = float(loads.max()) if slots else 0.0
    out["min_true_load"] = float(loads.min()) if slots else 0.0
    max_load, _, slack = load_balance_statistic(record, cfg.n_users, cfg.n_channels)
    out["balance_max_load"] = max_load
    out["balance_slack"] = slack
    # mean over (episode blocks, users) of the discounted episode return
    t_len = int(record.slot.max())
    rewards = record.reward.reshape(-1, t_len, cfg.n_users)
    weights = cfg.gamma ** np.arange(t_len)
    out["mean_discounted_return"] = float((weights @ rewards).mean())
    return out


class _RowBuffer:
    def __init__(self, run_id: int):
        self.run_id = run_id
        self.iteration = []
        self.episode = []
        self.slot = []
        self.action = []
        self.ack = []
        self.reward = []

    def log_slot(self, iteration, episode, slot, actions, ack, rewards):
        self.iteration.append(iteration)
        self.episode.append(episode)
        self.slot.append(slot)
        self.action.append(actions.copy())
        self.ack.append(ack.copy())
        self.reward.append(rewards.copy())

    def finish(self, n_users: int) -> MetricsRecord:
        s = len(self.iteration)
        if s == 0:
            return MetricsRecord()
        rec = MetricsRecord(
            run=np.full(s * n_users, self.run_id, np.int64),
            iteration=np.repeat(np.asarray(self.iteration, np.int64), n_users),
            episode=np.repeat(np.asarray(self.episode, np.int64), n_users),
            slot=np.repeat(np.asarray(self.slot, np.int64), n_users),
            user=np.tile(np.arange(n_users, dtype=np.int64), s),
            action=np.concatenate(self.action),
            ack=np.concatenate(self.ack),
            reward=np.concatenate(self.reward),
        )
        return rec


class _Loop:
    """Shared state for one run (training or evaluation)."""

    def __init__(self, cfg: SimConfig, phase: str):
        self.cfg = cfg
        self.phase = phase
        self.n = cfg.n_users
        self.k = cfg.n_channels
        self.m = cfg.effective_top_m()
        self.p_t = cfg.p_transmit_resolved()
        self.radio = cfg.radio()
        self.reward_norm = self.radio.bandwidth_hz * math.log2(1.0 + self.radio.snr)
        self.prior = math.ceil(self.n / self.k)
        self.est_p = min(max(self.p_t, _EST_P_MIN), _EST_P_MAX)

        seed = cfg.seed
        self.rng_fading = rng_mod.stream(seed, "fading", phase)
        self.gate_gens = [rng_mod.stream(seed, "gate", n, phase) for n in range(self.n)]
        self.explore_gens = [rng_mod.stream(seed, "explore", n, phase) for n in range(self.n)]
        self.policy_gens = [rng_mod.stream(seed, "policy", n, phase) for n in range(self.n)]

        fixed = cfg.fixed_gain_matrix() if cfg.channel_mode == "fixed" else None
        self.field = create_gain_field(
            self.n, self.k, cfg.channel_mode,
            rng=self.rng_fading,
            ar1_coefficient=cfg.ar1_coefficient_resolved() if cfg.channel_mode == "ar1" else 0.0,
            fixed_gains=fixed,
        )

        self.n_transmit = np.zeros((self.n, self.k), np.int64)
        self.n_success = np.zeros((self.n, self.k), np.int64)
        self.window_clock = 0
        self.prev_counts = np.zeros(self.k + 1, np.int64)
        self.prev_counts[0] = self.n
        self.est_load_min = math.inf
        self.est_load_max = -math.inf

    def reset_counters(self):
        self.n_transmit[:] = 0
        self.n_success[:] = 0
        self.window_clock = 0

    def estimated_loads(self) -> np.ndarray:
        """(N, K) integer load estimates with UNKNOWN already replaced by
        the N/K prior; mirrors load.estimate_load exactly."""
        est = load_mod.estimate_loads_array(
            self.n_transmit, self.n_success, self.est_p, self.n
        )
        return np.where(est == load_mod.UNKNOWN, self.prior, est)

    def build_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """Returns (x, loads): the (N, K+1) network input and the (N, K)
        load vector used by the selection layer."""
        if self.cfg.observability == "genie":
            x = np.tile(self.prev_counts.astype(float), (self.n, 1))
            loads = np.tile(self.prev_counts[1:], (self.n, 1))
            loads = np.maximum(loads, 0)
            return x, loads
        loads = self.estimated_loads()
        x = np.empty((self.n, self.k + 1))
        x[:, 1:] = loads
        x[:, 0] = np.maximum(0, self.n - loads.sum(axis=1))
        if loads.size:
            self.est_load_min = min(self.est_load_min, float(loads.min()))
            self.est_load_max = max(self.est_load_max, float(loads.max()))
        return x, loads

    def apply_outcome(self, actions: np.ndarray, ack: np.ndarray):
        tx = np.nonzero(actions > 0)[0]
        self.n_transmit[tx, actions[tx] - 1] += 1
        ok = tx[ack[tx] == 1]
        self.n_success[ok, actions[ok] - 1] += 1
        self.prev_counts = np.bincount(actions, minlength=self.k + 1)
        self.window_clock += 1
        if self.window_clock >= self.cfg.window:
            self.n_transmit[:] = 0
            self.n_success[:] = 0
            self.window_clock = 0


def _net_axes(share: bool, n_users: int):
    """(bank size, batch size) for the per-slot forward pass."""
    return (1, n_users) if share else (n_users, 1)


def _slot_forward(params, x, state, share: bool):
    """Per-slot forward for all agents; returns (q (N, K+1), new state)."""
    if share:
        q, state = network.forward(params, x[None, :, :], state)
        return q[0], state
    q, state = network.forward(params, x[:, None, :], state)
    return q[:, 0, :], state


def _choose_actions(loop: _Loop, qs, loads, epsilon, beta, training):
    cfg = loop.cfg
    actions = np.empty(loop.n, np.int64)
    for n in range(loop.n):
        if cfg.policy == "random":
            actions[n] = baselines.random_access_policy(loop.k, loop.p_t, loop.policy_gens[n])
        elif cfg.policy == "softmax":
            if loop.gate_gens[n].random() >= loop.p_t:
                actions[n] = 0
            else:
                actions[n] = baselines.softmax_channel(qs[n], beta, loop.policy_gens[n])
        else:
            actions[n] = agent_mod.gated_action(
                qs[n], loads[n], loop.m, loop.p_t,
                epsilon if training else 0.0,
                loop.gate_gens[n], loop.explore_gens[n],
            )
    return actions


def _finalize(loop: _Loop, rows: _RowBuffer) -> MetricsRecord:
    rec = rows.finish(loop.n)
    rec.aggregates = recompute_aggregates(rec, loop.cfg)
    rec.aggregates["max_estimated_load"] = (
        loop.est_load_max if loop.est_load_max > -math.inf else 0.0
    )
    rec.aggregates["min_estimated_load"] = (
        loop.est_load_min if loop.est_load_min < math.inf else 0.0
    )
    return rec


def run_training(cfg: SimConfig):
    """Collect-and-train for cfg.iterations; returns (snapshots, record).

    Snapshots hold the two networks plus the final counters, enough to
    resume or evaluate.  For the random policy the networks are absent.
    """
    loop = _Loop(cfg, "train")
    rows = _RowBuffer(cfg.seed)
    n, k, t_len, e_len = loop.n, loop.k, cfg.slots, cfg.episodes
    isz = k + 1
    uses_net = cfg.policy in ("d3rl", "softmax")

    params1 = params2 = None
    if uses_net:
        bank, batch = _net_axes(cfg.share_weights, n)
        init_rng = rng_mod.stream(cfg.seed, "init")
        params1 = network.init_params(cfg.net_spec(), bank, init_rng)
        params2 = network.sync_params(params1)

    for it in range(1, cfg.iterations + 1):
        loop.reset_counters()
        epsilon = cfg.epsilon_at(it - 1)
        beta = cfg.beta_at(it - 1)
        inputs_buf = np.zeros((e_len, t_len + 1, n, isz))
        actions_buf = np.zeros((e_len, t_len, n), np.int64)
        rewards_buf = np.zeros((e_len, t_len, n))

        for ep in range(e_len):
            state = None
            if uses_net:
                bank, batch = _net_axes(cfg.share_weights, n)
                state = network.zero_state(params1, batch)
            if cfg.redraw_gains_each_episode and cfg.channel_mode == "ar1":
                loop.field = create_gain_field(
                    n, k, "ar1", rng=loop.rng_fading,
                    ar1_coefficient=cfg.ar1_coefficient_resolved(),
                )
            for t in range(1, t_len + 1):
                loop.field = advance_gains(loop.field, loop.rng_fading)
                x, loads = loop.build_inputs()
                if uses_net:
                    qs, state = _slot_forward(params1, x, state, cfg.share_weights)
                else:
                    qs = None
                actions = _choose_actions(loop, qs, loads, epsilon, beta, training=True)
                ack, rates = resolve_slot(actions, loop.field, loop.radio)
                rewards = rates / loop.reward_norm
                loop.apply_outcome(actions, ack)
                rows.log_slot(it, ep + 1, t, actions, ack, rewards)
                inputs_buf[ep, t - 1] = x
                actions_buf[ep, t - 1] = actions
                rewards_buf[ep, t - 1] = rewards
            # bootstrap input observed after the final slot
            x_next, _ = loop.build_inputs()
            inputs_buf[ep, t_len] = x_next

        if uses_net:
            params1, params2 = _train_iteration(
                cfg, params1, params2, inputs_buf, actions_buf, rewards_buf
            )

    snapshots = {
        "params1": params1,
        "params2": params2,
        "n_transmit": loop.n_transmit.copy(),
        "n_success": loop.n_success.copy(),
    }
    return snapshots, _finalize(loop, rows)


def _train_iteration(cfg, params1, params2, inputs_buf, actions_buf, rewards_buf):
    """One double-Q training step on the iteration's episodes."""
    e_len, t_plus, n, isz = inputs_buf.shape
    t_len = t_plus - 1
    if cfg.share_weights:
        # agents become extra batch entries of the single network
        seq = inputs_buf.transpose(1, 0, 2, 3).reshape(t_plus, 1, e_len * n, isz)
        act_seq = actions_buf.transpose(1, 0, 2).reshape(t_len, 1, e_len * n)
        rew_seq = rewards_buf.transpose(1, 0, 2).reshape(t_len, 1, e_len * n)
    else:
        seq = inputs_buf.transpose(1, 2, 0, 3)          # (T+1, N, E, I)
        act_seq = actions_buf.transpose(1, 2, 0)         # (T, N, E)
        rew_seq = rewards_buf.transpose(1, 2, 0)

    bank, bsz = seq.shape[1], seq.shape[2]
    state1 = network.zero_state(params1, bsz)
    state2 = network.zero_state(params2, bsz)
    q1_seq = np.empty((t_plus, bank, bsz, isz))
    q2_seq = np.empty((t_plus, bank, bsz, isz))
    for t in range(t_plus):
        q1_seq[t], state1 = network.forward(params1, seq[t], state1)
        q2_seq[t], state2 = network.forward(params2, seq[t], state2)

    # target per step: r(t) + gamma * Q2(argmax Q1) at the next input
    amax = q1_seq[1:].argmax(axis=-1)                    # (T, bank, bsz)
    boot = np.take_along_axis(q2_seq[1:], amax[..., None], axis=-1)[..., 0]
    targets = rew_seq + cfg.gamma * boot

    batch = network.TrainingBatch(inputs=seq[:t_len], actions=act_seq, targets=targets)
    grads = network.backward(params1, batch)
    params1 = network.optimizer_step(params1, grads, cfg.alpha, cfg.clip_threshold)
    params2 = network.sync_params(params1)
    return params1, params2


def run_evaluation(cfg: SimConfig, snapshots) -> MetricsRecord:
    """Frozen-parameter rollout: no exploration, no training.

    Iteration is logged as 0 to mark the evaluation phase.  An empty
    evaluation (0 episodes or slots) yields a defined empty record.
    """
    uses_net = cfg.policy in ("d3rl", "softmax")
    params1 = None
    if uses_net:
        if snapshots is None or snapshots.get("params1") is None:
            raise ValueError("evaluation of this policy requires trained snapshots")
        params1 = snapshots["params1"]
        if params1.spec.n_channels != cfg.n_channels:
            raise ValueError(
                f"snapshot is for K={params1.spec.n_channels}, config has K={cfg.n_channels}"
            )
        bank = 1 if cfg.share_weights else cfg.n_users
        if params1.n_nets != bank:
            raise ValueError(
                f"snapshot holds {params1.n_nets} networks, expected {bank}"
            )

    loop = _Loop(cfg, "eval")
    rows = _RowBuffer(cfg.seed)
    e_len, t_len = cfg.eval_episodes_resolved(), cfg.eval_slots_resolved()
    beta = cfg.beta_end

    for ep in range(e_len):
        if t_len == 0:
            break
        state = None
        if uses_net:
            _, batch = _net_axes(cfg.share_weights, loop.n)
            state = network.zero_state(params1, batch)
        for t in range(1, t_len + 1):
            loop.field = advance_gains(loop.field, loop.rng_fading)
            x, loads = loop.build_inputs()
            if uses_net:
                qs, state = _slot_forward(params1, x, state, cfg.share_weights)
            else:
                qs = None
            actions = _choose_actions(loop, qs, loads, 0.0, beta, training=False)
            ack, rates = resolve_slot(actions, loop.field, loop.radio)
            loop.apply_outcome(actions, ack)
            rows.log_slot(0, ep + 1, t, actions, ack, rates / loop.reward_norm)

    return _finalize(loop, rows)


def modal_profile(record: MetricsRecord, n_users: int) -> np.ndarray:
    """Most frequent action per user over the record (ties: lowest)."""
    profile = np.zeros(n_users, np.int64)
    for n in range(n_users):
        acts = record.action[record.user == n]
        if acts.size:
            profile[n] = np.bincount(acts).argmax()
    return profile


def save_snapshot(path, snapshots: dict):
    """Agent snapshot (networks + counters) as a single npz file."""
    arrays = {
        "n_transmit": snapshots["n_transmit"],
        "n_success": snapshots["n_success"],
    }
    for tag in ("params1", "params2"):
        p = snapshots.get(tag)
        if p is not None:
            meta = np.array(
                [p.spec.n_channels, p.spec.hidden, p.spec.value_width, p.spec.adv_width],
                np.int64,
            )
            arrays[f"{tag}_spec"] = meta
            for name, arr in p.arrays().items():
                arrays[f"{tag}_{name}"] = arr
    np.savez(path, **arrays)


def load_snapshot(path) -> dict:
    out = {"params1": None, "params2": None}
    with np.load(path) as data:
        out["n_transmit"] = data["n_transmit"]
        out["n_success"] = data["n_success"]
        for tag in ("params1", "params2"):
            key = f"{tag}_spec"
            if key in data.files:
                meta = data[key]
                spec = network.NetSpec(
                    n_channels=int(meta[0]), hidden=int(meta[1]),
                    value_width=int(meta[2]), adv_width=int(meta[3]),
                )
                kw = {
                    name: data[f"{tag}_{name}"] for name in network.PARAM_FIELDS
                }
                out[tag] = network.QNetworkParams(spec=spec, **kw)
    return out
