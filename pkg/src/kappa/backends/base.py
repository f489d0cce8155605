"""Token-model abstraction shared by all backends."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np


class TokenModel(ABC):
    """Next-token distribution source.

    next_dist must behave as a pure function of the prefix (internal
    caching is fine). Implementations must tolerate concurrent calls
    from multiple branch steppers.
    """

    vocab_size: int
    eos_token_id: int

    #: token ids that may appear in distributions but must never be
    #: sampled (e.g. the residual pseudo-token of a truncated payload)
    masked_token_ids: tuple[int, ...] = ()

    @abstractmethod
    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        """Logits over the vocabulary given the full conditioning prefix."""

    @abstractmethod
    def unconditional_dist(self) -> np.ndarray:
        """Logits conditioned only on the beginning-of-sequence context."""

    def close(self) -> None:
        """Release any per-run resources (sessions, caches)."""
