"""Alive-set management: draft-cutoff detection, the linear survivor
schedule, ranked pruning, and final selection.

All tie-breaking is lexicographic (lower branch index wins) so runs are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ContractViolation


@dataclass(frozen=True)
class PruneSchedule:
    n_branches: int
    cutoff_c: int
    horizon_tau: int

    def __post_init__(self) -> None:
        if self.n_branches < 1:
            raise ContractViolation("need at least one branch")
        if self.horizon_tau < 1:
            raise ContractViolation("horizon must be at least 1")


@dataclass(frozen=True)
class AliveSet:
    """Ordered set of alive branch indices; never empty."""

    alive: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.alive:
            raise ContractViolation("alive set must be nonempty")
        if len(set(self.alive)) != len(self.alive):
            raise ContractViolation("alive set has duplicate indices")

    def __len__(self) -> int:
        return len(self.alive)

    def __iter__(self):
        return iter(self.alive)

    def __contains__(self, idx: int) -> bool:
        return idx in self.alive


def detect_draft_cutoff(
    prefixes: Sequence[Sequence[int]],
    c_max: int,
    finished_lengths: Sequence[int] | None = None,
) -> int:
    """Smallest t at which all length-t prefixes are pairwise distinct,
    or c_max if they never separate.

    A branch that stopped early (finished_lengths[i] < t) counts as
    distinct from every other branch from its final length onward.
    """
    if c_max < 1:
        raise ContractViolation("c_max must be positive")
    n = len(prefixes)
    for t in range(1, c_max + 1):
        seen = set()
        distinct = True
        for i in range(n):
            if finished_lengths is not None and finished_lengths[i] < t:
                continue  # frozen branch, inconsistent with all
            key = tuple(prefixes[i][:t])
            if key in seen:
                distinct = False
                break
            seen.add(key)
        if distinct:
            return t
    return c_max


def survivor_target(schedule: PruneSchedule, t: int) -> int:
    """Linear schedule N - floor((t-c+1) * N / tau), clamped to >= 1."""
    c, tau, n = schedule.cutoff_c, schedule.horizon_tau, schedule.n_branches
    if not (c <= t < c + tau):
        raise ContractViolation(f"t={t} outside gating window [{c}, {c + tau})")
    k = t - c + 1
    return max(1, n - (k * n) // tau)


def prune_to_target(
    alive: AliveSet, scores: Mapping[int, float], target: int
) -> AliveSet:
    """Keep the `target` branches with the largest trajectory scores."""
    if target < 1:
        raise ContractViolation("target must be at least 1")
    if target > len(alive):
        raise ContractViolation("target exceeds alive-set size")
    ranked = sorted(alive, key=lambda i: (-scores[i], i))
    keep = set(ranked[:target])
    return AliveSet(tuple(i for i in alive if i in keep))


def select_final(alive: AliveSet, scores: Mapping[int, float]) -> int:
    """Argmax trajectory score; ties go to the lowest branch index."""
    return min(alive, key=lambda i: (-scores[i], i))
