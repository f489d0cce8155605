"""Add-k smoothed n-gram model with hard backoff to lower orders."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ContractViolation
from .base import TokenModel


class NGramModel(TokenModel):
    def __init__(
        self,
        order: int,
        vocab_size: int,
        eos_token_id: int,
        add_k: float = 0.01,
        bos_token_id: int | None = None,
    ):
        if order < 1:
            raise ContractViolation("order must be at least 1")
        if add_k <= 0.0:
            raise ContractViolation("add_k must be positive")
        self.order = order
        self.vocab_size = vocab_size
        self.eos_token_id = eos_token_id
        self.bos_token_id = bos_token_id
        self.add_k = add_k
        # counts[o] maps a length-(o-1) context tuple to (token counts, total)
        self._counts: list[dict[tuple[int, ...], tuple[dict[int, int], int]]] = [
            {} for _ in range(order + 1)
        ]

    @classmethod
    def train(
        cls,
        corpus: Sequence[Sequence[int]],
        order: int,
        add_k: float = 0.01,
        vocab_size: int | None = None,
        eos_token_id: int | None = None,
        bos_token_id: int | None = None,
    ) -> "NGramModel":
        if not corpus:
            raise ContractViolation("corpus must be nonempty")
        if vocab_size is None:
            vocab_size = max(max(seq) for seq in corpus if len(seq)) + 1
        if eos_token_id is None:
            eos_token_id = vocab_size - 1
        model = cls(order, vocab_size, eos_token_id, add_k, bos_token_id)
        for seq in corpus:
            seq = list(seq)
            for o in range(1, order + 1):
                table = model._counts[o]
                for i in range(len(seq) - o + 1):
                    ctx = tuple(seq[i:i + o - 1])
                    tok = seq[i + o - 1]
                    counts, total = table.get(ctx, (None, 0))
                    if counts is None:
                        counts = {}
                        table[ctx] = (counts, 0)
                    counts[tok] = counts.get(tok, 0) + 1
                    table[ctx] = (counts, total + 1)
        return model

    def _cond_probs(self, context: Sequence[int]) -> np.ndarray:
        """Smoothed conditional distribution, backing off until a seen
        context (the empty unigram context always exists)."""
        context = tuple(context)
        for o in range(min(self.order, len(context) + 1), 0, -1):
            ctx = context[len(context) - (o - 1):]
            hit = self._counts[o].get(ctx)
            if hit is not None:
                counts, total = hit
                probs = np.full(self.vocab_size, self.add_k)
                for tok, c in counts.items():
                    probs[tok] += c
                probs /= total + self.add_k * self.vocab_size
                return probs
        raise ContractViolation("model has no unigram counts; train it first")

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        return np.log(self._cond_probs(prefix))

    def unconditional_dist(self) -> np.ndarray:
        if self.bos_token_id is not None:
            return np.log(self._cond_probs([self.bos_token_id]))
        return np.log(self._cond_probs([]))
