"""Experiment configuration: a flat key=value file plus overrides.

One `key = value` per line, `#` starts a comment.  Unknown keys are
rejected.  Overrides (from the CLI's --set) are applied after the file.
"""

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .channel import RadioConfig
from .network import NetSpec

CHANNEL_MODES = ("iid", "ar1", "fixed")
OBSERVABILITY = ("distributed", "genie")
POLICIES = ("d3rl", "softmax", "random")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


@dataclass(frozen=True)
class SimConfig:
    """Full description of one experiment.

    Desk-scale defaults; the full-scale setting ships as a config file
    and is flagged long-running.
    """

    n_users: int = 10
    n_channels: int = 5
    top_m: int = 2
    iterations: int = 500          # training iterations (outermost loop)
    episodes: int = 8              # episodes per iteration
    slots: int = 20                # slots per episode
    p_transmit: float | None = None  # defaults to K/N
    gamma: float = 0.95
    alpha: float = 0.05
    snr_db: float = 35.0
    bandwidth_hz: float = 20e6
    doppler_hz: float = 100.0
    slot_duration_s: float = 1e-3
    channel_mode: str = "iid"
    ar1_coefficient: float | None = None  # defaults to exp(-2*pi*fd*Ts)
    fixed_gains: str | None = None        # rows ';', columns ','
    observability: str = "distributed"
    policy: str = "d3rl"
    beta_start: float = 1.0
    beta_end: float = 20.0
    seed: int = 1
    window: int = 100
    clip_threshold: float = 1.0
    epsilon_start: float = 0.2
    epsilon_end: float = 0.0
    hidden: int = 32
    value_width: int = 10
    adv_width: int = 10
    eval_episodes: int | None = None      # defaults to episodes
    eval_slots: int | None = None         # defaults to slots
    redraw_gains_each_episode: bool = True
    share_weights: bool = False
    enforce_overload: bool = True         # N > K regime check

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_users < 1:
            raise ConfigError("n_users must be at least 1")
        if self.n_channels < 1:
            raise ConfigError("n_channels must be at least 1")
        if self.enforce_overload and not self.n_users > self.n_channels:
            raise ConfigError(
                f"N > K required (got N={self.n_users}, K={self.n_channels})"
            )
        if self.top_m < 1:
            raise ConfigError("top_m must be at least 1")
        for name in ("iterations", "episodes", "slots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.p_transmit is not None and not 0.0 <= self.p_transmit <= 1.0:
            raise ConfigError("p_transmit must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.ar1_coefficient is not None and not 0.0 <= self.ar1_coefficient < 1.0:
            raise ConfigError("ar1_coefficient must lie in [0, 1); 1 would freeze gains")
        if self.channel_mode == "fixed":
            self.fixed_gain_matrix()  # shape check
        if self.observability not in OBSERVABILITY:
            raise ConfigError(f"observability must be one of {OBSERVABILITY}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.clip_threshold <= 0:
            raise ConfigError("clip_threshold must be positive")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("hidden", "value_width", "adv_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("eval_episodes", "eval_slots"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ConfigError(f"{name} must be nonnegative")

    # -- resolved values ------------------------------------------------

    def effective_top_m(self) -> int:
        """M clamped to the number of channels."""
        return min(self.top_m, self.n_channels)

    def p_transmit_resolved(self) -> float:
        if self.p_transmit is not None:
            return self.p_transmit
        return min(1.0, self.n_channels / self.n_users)

    def ar1_coefficient_resolved(self) -> float:
        if self.ar1_coefficient is not None:
            return self.ar1_coefficient
        return self.radio().default_ar1_coefficient()

    def radio(self) -> RadioConfig:
        return RadioConfig(
            snr_db=self.snr_db,
            bandwidth_hz=self.bandwidth_hz,
            doppler_hz=self.doppler_hz,
            slot_duration_s=self.slot_duration_s,
        )

    def net_spec(self) -> NetSpec:
        return NetSpec(
            n_channels=self.n_channels,
            hidden=self.hidden,
            value_width=self.value_width,
            adv_width=self.adv_width,
        )

    def fixed_gain_matrix(self) -> np.ndarray:
        if self.fixed_gains is None:
            raise ConfigError("channel_mode=fixed requires fixed_gains")
        try:
            rows = [
                [float(v) for v in row.split(",")]
                for row in self.fixed_gains.strip().split(";")
            ]
            g = np.array(rows, dtype=float)
        except ValueError as exc:
            raise ConfigError(f"cannot parse fixed_gains: {exc}") from None
        if g.shape != (self.n_users, self.n_channels):
            raise ConfigError(
                f"fixed_gains must be {self.n_users}x{self.n_channels}, got {g.shape}"
            )
        if np.any(g <= 0):
            raise ConfigError("fixed gains must be positive")
        return g

    def epsilon_at(self, iteration: int) -> float:
        """Linear decay from epsilon_start to epsilon_end over the first
        half of training; training only."""
        half = max(1, self.iterations // 2)
        frac = min(1.0, iteration / half)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac

    def beta_at(self, iteration: int) -> float:
        """Softmax temperature ramp across training."""
        if self.iterations <= 1:
            return self.beta_end
        frac = iteration / (self.iterations - 1)
        return self.beta_start + (self.beta_end - self.beta_start) * frac

    def eval_episodes_resolved(self) -> int:
        return self.episodes if self.eval_episodes is None else self.eval_episodes

    def eval_slots_resolved(self) -> int:
        return self.slots if self.eval_slots is None else self.eval_slots

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_BOOL_KEYS = {"redraw_gains_each_episode", "share_weights", "enforce_overload"}
_STR_KEYS = {"channel_mode", "observability", "policy", "fixed_gains"}
_INT_KEYS = {
    "n_users", "n_channels", "top_m", "iterations", "episodes", "slots",
    "seed", "window", "hidden", "value_width", "adv_width",
    "eval_episodes", "eval_slots",
}
_FLOAT_KEYS = {
    "p_transmit", "gamma", "alpha", "snr_db", "bandwidth_hz", "doppler_hz",
    "slot_duration_s", "ar1_coefficient", "beta_start", "beta_end",
    "clip_threshold", "epsilon_start", "epsilon_end",
}
_ALL_KEYS = _BOOL_KEYS | _STR_KEYS | _INT_KEYS | _FLOAT_KEYS


def _convert(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None


def _parse_pairs(lines, source: str) -> dict:
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {text!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def parse_config(path=None, overrides=()) -> SimConfig:
    """Build a validated SimConfig from an optional file and overrides.

    An empty (or absent) file yields the documented desk-scale defaults.
    """
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(_parse_pairs(p.read_text().splitlines(), str(p)))
    values.update(_parse_pairs(list(overrides), "--set"))
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **kw)
