"""Comparison policies, brute-force oracles and the analytic bound.

The brute-force routines materialize the full utility table of the
single-slot random access game for enumerable instances and provide
exhaustive welfare maximization, pure-Nash checking and exact
mixed-strategy payoffs.  The reward bound is this artifact's own
documented definition (see README); every output labels it
"artifact bound".
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .medium import analytic_probabilities

MAX_PROFILES = 10 ** 6


def softmax_policy(q, beta: float, rng: np.random.Generator) -> int:
    """Sample an action (0..K) with probability proportional to
    exp(beta * q_a).  beta=0 is uniform; large beta approaches argmax."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    q = np.asarray(q, dtype=float)
    z = beta * q
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(np.searchsorted(np.cumsum(p), rng.random()))


def softmax_channel(q, beta: float, rng: np.random.Generator) -> int:
    """Softmax restricted to real channels 1..K (the transmit gate is
    applied separately so baselines share the D3RL transmission
    probability)."""
    return 1 + softmax_policy(np.asarray(q, dtype=float)[1:], beta, rng)


def random_access_policy(k: int, p_t: float, rng: np.random.Generator) -> int:
    """Naive baseline: gate with p_T, then a uniform channel."""
    if rng.random() >= p_t:
        return 0
    return int(rng.integers(1, k + 1))


@dataclass(frozen=True)
class UtilityTable:
    """Single-slot utilities of the random access game, for fixed
    effective gains (linear SNR * |h|^2) per user and channel."""

    effective_gains: np.ndarray  # (N, K)
    bandwidth: float = 1.0

    @property
    def n_users(self) -> int:
        return self.effective_gains.shape[0]

    @property
    def n_channels(self) -> int:
        return self.effective_gains.shape[1]

    def n_profiles(self) -> int:
        return (self.n_channels + 1) ** self.n_users

    def utilities(self, profile) -> np.ndarray:
        """Per-user utilities of one joint action."""
        profile = np.asarray(profile, dtype=np.int64)
        counts = np.bincount(profile, minlength=self.n_channels + 1)
        out = np.zeros(self.n_users)
        for n, a in enumerate(profile):
            if a > 0 and counts[a] == 1:
                out[n] = self.bandwidth * math.log2(1.0 + self.effective_gains[n, a - 1])
        return out

    def profiles(self):
        """All joint actions in lexicographic order."""
        return itertools.product(range(self.n_channels + 1), repeat=self.n_users)


def brute_force_optimal(table: UtilityTable) -> tuple[tuple, float]:
    """Exhaustive welfare maximization; ties keep the lexicographically
    smallest profile.  Refuses instances beyond 10^6 profiles."""
    if table.n_profiles() > MAX_PROFILES:
        raise ValueError(
            f"instance too large for enumeration: {table.n_profiles()} profiles"
        )
    best_profile, best_welfare = None, -1.0
    for profile in table.profiles():
        w = float(table.utilities(profile).sum())
        if w > best_welfare:
            best_profile, best_welfare = profile, w
    return best_profile, best_welfare


def is_pure_nash(profile, table: UtilityTable) -> bool:
    """True iff no user can strictly raise its own utility by a
    unilateral deviation."""
    profile = list(profile)
    base = table.utilities(profile)
    for n in range(table.n_users):
        original = profile[n]
        for alt in range(table.n_channels + 1):
            if alt == original:
                continue
            profile[n] = alt
            if table.utilities(profile)[n] > base[n]:
                profile[n] = original
                return False
        profile[n] = original
    return True


def mixed_strategy_payoff(strategies, table: UtilityTable) -> np.ndarray:
    """Exact expected payoff per user for a mixed-strategy profile.

    Each strategy is a distribution over the K+1 actions.
    """
    strategies = [np.asarray(s, dtype=float) for s in strategies]
    if len(strategies) != table.n_users:
        raise ValueError("need one strategy per user")
    for s in strategies:
        if s.shape != (table.n_channels + 1,):
            raise ValueError("strategy has wrong length")
        if abs(s.sum() - 1.0) > 1e-9 or np.any(s < -1e-12):
            raise ValueError("strategy is not a probability distribution")
    if table.n_profiles() > MAX_PROFILES:
        raise ValueError("instance too large for enumeration")
    payoff = np.zeros(table.n_users)
    for profile in table.profiles():
        prob = 1.0
        for n, a in enumerate(profile):
            prob *= strategies[n][a]
        if prob > 0.0:
            payoff += prob * table.utilities(profile)
    return payoff


def order_statistic_gain(
    n_channels: int, m: int, rng: np.random.Generator, samples: int = 10 ** 5
) -> np.ndarray:
    """Monte-Carlo draws of the mean of the M largest among K unit-mean
    exponential gains (one draw per row)."""
    g = rng.exponential(1.0, (samples, n_channels))
    top = np.sort(g, axis=1)[:, n_channels - m:]
    return top.mean(axis=1)


def upper_bound_curve(cfg) -> float:
    """Artifact bound on the per-user average reward (normalized units).

    Defined as P_succ(L_ref, p_T) times the expected normalized rate at
    each user's best channel gain, with L_ref = max(1, floor(N/K)).  The
    best-gain envelope dominates whatever channel the selection layer
    settles on; the success factor is the balanced-load ALOHA rate.  Not
    the bound of any prior work; a documented dominance reference for
    this simulator only.
    """
    if cfg.n_users < 1 or cfg.n_channels < 1:
        raise ValueError("need at least one user and channel")
    l_ref = max(1, cfg.n_users // cfg.n_channels)
    p_t = cfg.p_transmit_resolved()
    _, p_succ, _ = analytic_probabilities(p_t, l_ref)
    snr = cfg.radio().snr
    norm = math.log2(1.0 + snr)
    if cfg.channel_mode == "fixed":
        x = cfg.fixed_gain_matrix().max(axis=1)
    else:
        from . import rng as rng_mod

        gen = rng_mod.stream(cfg.seed, "bound")
        x = order_statistic_gain(cfg.n_channels, 1, gen)
    rate = np.log2(1.0 + snr * x).mean() / norm
    return float(p_succ * rate)
