"""Shared test backends and config helpers."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pytest

from kappa.backends.base import TokenModel
from kappa.distributions import SamplerConfig
from kappa.engine import RunConfig

DEAD = -1.0e4


class FixedSequenceModel(TokenModel):
    """Deterministic one-hot model: emits a fixed token string then EOS."""

    def __init__(self, sequence: Sequence[int], vocab_size: int = 8,
                 eos_token_id: int = 0, prompt_len: int = 0):
        self.sequence = list(sequence)
        self.vocab_size = vocab_size
        self.eos_token_id = eos_token_id
        self.prompt_len = prompt_len

    def _one_hot(self, tok: int) -> np.ndarray:
        out = np.full(self.vocab_size, DEAD)
        out[tok] = 0.0
        return out

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        g = len(prefix) - self.prompt_len
        if g < len(self.sequence):
            return self._one_hot(self.sequence[g])
        return self._one_hot(self.eos_token_id)

    def unconditional_dist(self) -> np.ndarray:
        return np.zeros(self.vocab_size)


class UniformModel(TokenModel):
    """Uniform distribution every step; terminates only via max_new_tokens."""

    def __init__(self, vocab_size: int = 4, eos_token_id: int = 0):
        self.vocab_size = vocab_size
        self.eos_token_id = eos_token_id

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        return np.zeros(self.vocab_size)

    def unconditional_dist(self) -> np.ndarray:
        return np.zeros(self.vocab_size)


class NoisyModel(TokenModel):
    """Prefix-hashed random logits; no EOS until max_new_tokens."""

    def __init__(self, vocab_size: int = 32, seed: int = 0, scale: float = 1.0):
        self.vocab_size = vocab_size
        self.eos_token_id = 0
        self.seed = seed
        self.scale = scale

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        key = (self.seed * 0x9E3779B97F4A7C15 + hash(tuple(prefix))) % (2 ** 63)
        logits = np.random.default_rng(key).standard_normal(self.vocab_size)
        logits[self.eos_token_id] = DEAD  # never finish
        return logits * self.scale

    def unconditional_dist(self) -> np.ndarray:
        return np.zeros(self.vocab_size)


class FaultyModel(TokenModel):
    """Produces valid logits for a few calls, then non-finite garbage."""

    def __init__(self, healthy_calls: int = 3, vocab_size: int = 8):
        self.vocab_size = vocab_size
        self.eos_token_id = 0
        self.calls = 0
        self.healthy_calls = healthy_calls

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        self.calls += 1
        if self.calls > self.healthy_calls:
            out = np.zeros(self.vocab_size)
            out[1] = np.nan
            return out
        out = np.zeros(self.vocab_size)
        out[self.eos_token_id] = DEAD
        return out

    def unconditional_dist(self) -> np.ndarray:
        return np.zeros(self.vocab_size)


def small_cfg(strategy: str, **kw) -> RunConfig:
    """Run config sized for fast unit tests."""
    defaults = dict(
        strategy=strategy,
        n_branches=4,
        horizon_tau=8,
        c_max=12,
        seed=7,
        sampler=SamplerConfig(max_new_tokens=64),
    )
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
