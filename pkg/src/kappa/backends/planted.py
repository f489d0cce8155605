"""Synthetic planted-quality model.

Every branch acquires a latent quality profile through its first sampled
token, so the model stays a pure function of the prefix while different
branches follow different per-step distribution families. Profile quality
controls three things:

* how fast the branch's KL against the unconditional baseline grows over
  time (the information-gain signal),
* how peaked its distributions are (confidence up, entropy down),
* how likely its final marked answer is to be correct.

The separation parameter scales all three effects; at separation 0 every
profile is identical and branch outcomes are exchangeable. A per-prefix
noise direction keeps equal-quality branches from tying exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..errors import ContractViolation
from .base import TokenModel

EOS_ID = 0
BOS_ID = 1
ANSWER_OPEN_ID = 2
ANSWER_CLOSE_ID = 3
DIGIT_BASE_ID = 4  # digits 0..9 occupy ids 4..13
CONTENT_BASE_ID = 14

_DEAD = -1.0e4   # underflows to probability exactly 0 after softmax
_SPECIAL = -60.0  # keeps signal distributions effectively content-only

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix(*parts: int) -> int:
    acc = 0x9E3779B97F4A7C15
    for p in parts:
        acc = _splitmix64(acc ^ (p & _MASK64))
    return acc


@dataclass(frozen=True)
class PlantedTask:
    """Parameters of one synthetic decoding problem.

    Profile j has quality quality_decay^(n_profiles-1-j), so the levels
    are geometrically spaced and exactly one profile (the last, quality
    1.0) is the planted best; the spacing keeps the top profiles well
    separated no matter how many there are. Generated sequences end with
    the answer wrapped in marker tokens followed by end-of-sequence, at
    a total length drawn per entry token from [min_len, max_len].
    """

    seed: int
    vocab_size: int = 256
    prompt_len: int = 600
    n_profiles: int = 16
    quality_decay: float = 0.75
    separation: float = 6.0
    noise_scale: float = 0.15
    base_scale: float = 1.0
    ramp_len: int = 128
    min_len: int = 910
    max_len: int = 990
    answer_len: int = 3
    answer_skill: float = 0.25

    prompt: tuple[int, ...] = field(init=False)
    correct_answer: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        if self.vocab_size <= CONTENT_BASE_ID + 1:
            raise ContractViolation("vocab too small for the content region")
        if self.n_profiles < 1:
            raise ContractViolation("need at least one profile")
        if not (0.0 < self.quality_decay <= 1.0):
            raise ContractViolation("quality_decay must lie in (0, 1]")
        if self.min_len < self.answer_len + 4 or self.max_len < self.min_len:
            raise ContractViolation("length range cannot fit the answer tail")
        rng = np.random.default_rng([self.seed, 0xA11CE])
        prompt = rng.integers(
            CONTENT_BASE_ID, self.vocab_size, size=self.prompt_len
        )
        answer = rng.integers(0, 10, size=self.answer_len) + DIGIT_BASE_ID
        object.__setattr__(self, "prompt", tuple(int(t) for t in prompt))
        object.__setattr__(self, "correct_answer", tuple(int(t) for t in answer))

    @property
    def best_profile(self) -> int:
        return self.n_profiles - 1

    def profile_quality(self, profile: int) -> float:
        return self.quality_decay ** (self.n_profiles - 1 - profile)

    def decoy_answer(self) -> tuple[int, ...]:
        return tuple(
            DIGIT_BASE_ID + ((t - DIGIT_BASE_ID + 5) % 10)
            for t in self.correct_answer
        )


class PlantedModel(TokenModel):
    """TokenModel realization of a PlantedTask."""

    def __init__(self, task: PlantedTask):
        self.task = task
        self.vocab_size = task.vocab_size
        self.eos_token_id = EOS_ID
        self._n_content = task.vocab_size - CONTENT_BASE_ID
        base = np.random.default_rng([task.seed, 0xBA5E]).standard_normal(
            self._n_content
        )
        self._base = base * task.base_scale
        self._uncond = self._full_logits(self._base)
        # per-entry signal directions are few per run; cache them
        self._gdir = lru_cache(maxsize=4096)(self._gdir_uncached)

    # --- latent profile plumbing -------------------------------------

    def profile_of_entry(self, entry: int) -> int:
        return _mix(self.task.seed, 0x9F0F11E, entry) % self.task.n_profiles

    def quality_of_entry(self, entry: int) -> float:
        return self.task.profile_quality(self.profile_of_entry(entry))

    def end_len_of_entry(self, entry: int) -> int:
        span = self.task.max_len - self.task.min_len + 1
        return self.task.min_len + _mix(self.task.seed, 0x1E57, entry) % span

    def planted_best_branch(self, entries: Sequence[int]) -> int:
        """Lowest-index branch holding the run's best acquired profile."""
        qualities = [self.quality_of_entry(e) for e in entries]
        best = max(qualities)
        return min(i for i, q in enumerate(qualities) if q == best)

    def is_best_quality(self, entries: Sequence[int], branch: int) -> bool:
        """True when the branch's profile quality equals the run maximum.

        Branches that drew the same profile are statistically identical,
        so any of them counts as the planted best.
        """
        qualities = [self.quality_of_entry(e) for e in entries]
        return qualities[branch] == max(qualities)

    def correct_prob(self, entry: int) -> float:
        u = self.quality_of_entry(entry)
        p = 0.5 + self.task.answer_skill * self.task.separation * (u - 0.5)
        return float(min(max(p, 0.05), 0.95))

    # --- distribution construction ------------------------------------

    def _gdir_uncached(self, entry: int) -> np.ndarray:
        key = _mix(self.task.seed, 0x6D12, entry)
        return np.random.default_rng(key).standard_normal(self._n_content)

    def _full_logits(self, content: np.ndarray) -> np.ndarray:
        out = np.full(self.vocab_size, _SPECIAL)
        out[CONTENT_BASE_ID:] = content
        return out

    def _one_hot(self, token: int) -> np.ndarray:
        out = np.full(self.vocab_size, _DEAD)
        out[token] = 0.0
        return out

    def _entry_logits(self) -> np.ndarray:
        out = np.full(self.vocab_size, _DEAD)
        out[CONTENT_BASE_ID:] = 0.0
        return out

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        task = self.task
        g = len(prefix) - task.prompt_len
        if g < 0:
            raise ContractViolation("prefix shorter than the task prompt")
        if g == 0:
            return self._entry_logits()

        entry = prefix[task.prompt_len]
        end_len = self.end_len_of_entry(entry)
        tail_start = end_len - task.answer_len - 3

        if g < tail_start:
            u = self.quality_of_entry(entry)
            ramp = min(g / task.ramp_len, 1.0)
            s = task.separation * u * ramp
            noise_key = _mix(task.seed, 0x0153, hash(tuple(prefix)))
            h = np.random.default_rng(noise_key).standard_normal(self._n_content)
            content = self._base + s * self._gdir(entry) + task.noise_scale * h
            return self._full_logits(content)

        if g == tail_start:
            return self._one_hot(ANSWER_OPEN_ID)
        if g <= tail_start + task.answer_len:
            j = g - tail_start - 1
            if j == 0:
                pc = self.correct_prob(entry)
                out = np.full(self.vocab_size, _DEAD)
                out[task.correct_answer[0]] = np.log(pc)
                out[task.decoy_answer()[0]] = np.log(1.0 - pc)
                return out
            took_correct = prefix[task.prompt_len + tail_start + 1] == \
                task.correct_answer[0]
            seq = task.correct_answer if took_correct else task.decoy_answer()
            return self._one_hot(seq[j])
        if g == tail_start + task.answer_len + 1:
            return self._one_hot(ANSWER_CLOSE_ID)
        return self._one_hot(EOS_ID)

    def unconditional_dist(self) -> np.ndarray:
        # Pooled baseline: at zero ramp every profile's content
        # distribution coincides with the base, so the profile average
        # is the base itself.
        return self._uncond.copy()
