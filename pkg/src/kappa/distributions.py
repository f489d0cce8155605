"""Numerically safe probability-vector operations.

Everything here is in nats (natural log). Signal computations elsewhere
use the full pre-filtering distribution; only sampling goes through the
top-k/top-p filter. Composition order for sampling is frozen as
temperature -> top-k -> top-p -> renormalize -> sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BackendFault, ConfigError, ContractViolation

ENTROPY_EPS = 1e-12
KL_FLOOR = 1e-12
_SUM_TOL = 1e-9

RngStream = np.random.Generator


@dataclass(frozen=True)
class TokenDist:
    """Probability vector over the vocabulary."""

    probs: np.ndarray
    support_size: int = field(init=False)

    def __post_init__(self) -> None:
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ContractViolation("probs must be a nonempty 1-d vector")
        if np.any(p < 0.0):
            raise ContractViolation("probabilities must be nonnegative")
        total = float(p.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ContractViolation(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "support_size", int(np.count_nonzero(p)))

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class LogitVec:
    """Unnormalized real scores per token id. Entries must be finite."""

    logits: np.ndarray

    def __post_init__(self) -> None:
        l = np.ascontiguousarray(self.logits, dtype=np.float64)
        if l.ndim != 1 or l.size == 0:
            raise ContractViolation("logits must be a nonempty 1-d vector")
        if not np.isfinite(l).all():
            raise BackendFault("non-finite logits received from backend")
        object.__setattr__(self, "logits", l)


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 0.7
    top_k: int = 20
    top_p: float = 0.95
    max_new_tokens: int = 1024

    def __post_init__(self) -> None:
        if not (self.temperature > 0.0):
            raise ConfigError("temperature must be positive")
        if self.top_k < 1:
            raise ConfigError("top_k must be a positive integer")
        if not (0.0 < self.top_p <= 1.0):
            raise ConfigError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ConfigError("max_new_tokens must be positive")

    def validate_for_vocab(self, vocab_size: int) -> None:
        if self.top_k > vocab_size:
            raise ConfigError(
                f"top_k={self.top_k} exceeds vocabulary size {vocab_size}"
            )


def _as_logit_array(l: LogitVec | np.ndarray) -> np.ndarray:
    if isinstance(l, LogitVec):
        return l.logits
    arr = np.ascontiguousarray(l, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise BackendFault("non-finite logits received from backend")
    return arr


def softmax_with_temperature(l: LogitVec | np.ndarray, temperature: float) -> TokenDist:
    if not (temperature > 0.0):
        raise ContractViolation("temperature must be positive")
    return TokenDist(_kernels.softmax_temp(_as_logit_array(l), temperature))


def floor_distribution(q: np.ndarray, eps: float = KL_FLOOR) -> np.ndarray:
    """Replace exact zeros with eps and renormalize.

    Keeps KL(p || q) finite when p's support exceeds q's.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    if not np.any(q == 0.0):
        return q
    out = np.where(q == 0.0, eps, q)
    out /= out.sum()
    return out


def kl_divergence(p: TokenDist, q: TokenDist) -> float:
    if p.dim != q.dim:
        raise ContractViolation(
            f"dimension mismatch: {p.dim} vs {q.dim}"
        )
    val = _kernels.kl_div(p.probs, floor_distribution(q.probs))
    if -_SUM_TOL < val < 0.0:
        return 0.0
    return val


def entropy(p: TokenDist) -> float:
    return _kernels.entropy(p.probs, ENTROPY_EPS)


def confidence(p: TokenDist) -> float:
    return _kernels.max_prob(p.probs)


def filter_top_k_top_p(p: TokenDist, cfg: SamplerConfig) -> TokenDist:
    return TokenDist(_kernels.filter_top_k_top_p(p.probs, cfg.top_k, cfg.top_p))


def sample_token(p: TokenDist, rng: RngStream) -> int:
    """Categorical draw; deterministic given the stream state."""
    return int(_kernels.sample_index(p.probs, rng.random()))
