"""Per-branch signal pipeline.

Raw KL readings become deltas, get median-of-means smoothing over a
sliding window, then a bias-corrected EMA. Together with confidence and
entropy they are z-normalized across the alive branches at each gating
step, combined into an instantaneous score, and folded into a
recency-weighted trajectory score.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import math

from .errors import ConfigError, ContractViolation

ZSCORE_EPS = 1e-8
ZSCORE_ZERO_STD = 1e-12


@dataclass(frozen=True)
class SignalWeights:
    w_kl: float = 0.7
    w_conf: float = 0.2
    w_ent: float = 0.1

    def __post_init__(self) -> None:
        for v in (self.w_kl, self.w_conf, self.w_ent):
            if not math.isfinite(v):
                raise ConfigError("signal weights must be finite")


@dataclass(frozen=True)
class SignalConfig:
    window_w: int = 16
    mom_buckets_m: int = 4
    ema_alpha: float = 0.5
    clamp_bound: float = 3.0

    def __post_init__(self) -> None:
        if self.window_w < 1 or self.mom_buckets_m < 1:
            raise ConfigError("window and bucket counts must be positive")
        if self.mom_buckets_m > self.window_w:
            raise ConfigError("mom_buckets_m must not exceed window_w")
        if not (0.0 < self.ema_alpha < 1.0):
            raise ConfigError("ema_alpha must lie in (0, 1)")
        if not (self.clamp_bound > 0.0):
            raise ConfigError("clamp_bound must be positive")


@dataclass
class SignalState:
    """Mutable per-branch accumulators for the gating phase."""

    prev_kl: float = 0.0
    delta_window: deque = field(default_factory=lambda: deque(maxlen=16))
    ema_raw: float = 0.0
    steps_since_c: int = 0
    score_history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: SignalConfig) -> "SignalState":
        return cls(delta_window=deque(maxlen=cfg.window_w))


def update_kl_delta(state: SignalState, d_now: float) -> float:
    """Return d_now - previous KL and push the delta into the window."""
    delta = d_now - state.prev_kl
    state.delta_window.append(delta)
    state.prev_kl = d_now
    return delta


def mom_smooth(window: Sequence[float], m: int) -> float:
    """Median of bucket means over the window (oldest to newest).

    The window is split into m contiguous buckets as evenly as possible;
    with fewer than m samples every sample is its own bucket. An even
    number of buckets takes the mean of the two middle bucket means.
    """
    n = len(window)
    if n == 0:
        raise ContractViolation("mom_smooth requires a nonempty window")
    m = min(m, n)
    base, extra = divmod(n, m)
    means = []
    start = 0
    for b in range(m):
        size = base + (1 if b < extra else 0)
        chunk = window[start:start + size] if isinstance(window, (list, tuple)) \
            else list(window)[start:start + size]
        means.append(sum(chunk) / size)
        start += size
    means.sort()
    mid = m // 2
    if m % 2 == 1:
        return means[mid]
    return 0.5 * (means[mid - 1] + means[mid])


def ema_update_and_read(state: SignalState, smoothed: float, alpha: float) -> float:
    """Advance the raw EMA accumulator and return the bias-corrected value.

    The accumulator starts at zero; correction divides by 1 - (1-alpha)^k
    at read time, so the first read returns the input exactly.
    """
    if not (0.0 < alpha < 1.0):
        raise ContractViolation("alpha must lie in (0, 1)")
    state.steps_since_c += 1
    state.ema_raw = alpha * smoothed + (1.0 - alpha) * state.ema_raw
    k = state.steps_since_c
    return state.ema_raw / (1.0 - (1.0 - alpha) ** k)


def zscore_normalize(values: Sequence[float], clamp_bound: float) -> list[float]:
    """Population z-scores clamped to [-clamp_bound, clamp_bound].

    Degenerate spreads (population std below 1e-12, including the
    single-branch case) map everything to 0. The epsilon guard only
    kicks in for spreads below it; healthy spreads divide by the exact
    std so the outputs have unit variance.
    """
    n = len(values)
    if n == 0:
        raise ContractViolation("zscore_normalize requires at least one value")
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    std = math.sqrt(var)
    if std < ZSCORE_ZERO_STD:
        return [0.0] * n
    denom = max(std, ZSCORE_EPS)
    return [
        min(max((v - mean) / denom, -clamp_bound), clamp_bound) for v in values
    ]


def instantaneous_score(ema_z: float, conf_z: float, ent_z: float,
                        wts: SignalWeights) -> float:
    return wts.w_kl * ema_z + wts.w_conf * conf_z + wts.w_ent * ent_z


def trajectory_score(history: Sequence[tuple[int, float]], c: int) -> float:
    """Recency-weighted mean of per-step scores, weights proportional to
    the timestep and normalized over [c, t]."""
    if not history:
        raise ContractViolation("trajectory_score requires a nonempty history")
    if history[0][0] != c:
        raise ContractViolation("history must start at the gating cutoff")
    denom = sum(t for t, _ in history)
    return sum(t * s for t, s in history) / denom
