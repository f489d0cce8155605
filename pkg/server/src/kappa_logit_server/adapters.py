"""Model adapters behind the wire protocol.

Two backends: a HuggingFace causal LM (for real deployments) and the
n-gram reference model from the decoding package (for tests and offline
use). Adapters never sample; all sampling lives client-side so the
engine's RNG discipline holds regardless of backend.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

DEFAULT_INSTRUCTION = (
    "Please reason step by step, and put your final answer within \\boxed{}."
)


class ModelAdapter(ABC):
    vocab_size: int
    eos_token_id: int

    @abstractmethod
    def encode_prompt(self, text: str) -> list[int]:
        """Tokenize prompt text, applying any chat template."""

    @abstractmethod
    def next_logits(self, prefix: Sequence[int]) -> np.ndarray:
        """Float64 logits over the vocabulary for the next token."""

    @abstractmethod
    def unconditional_logits(self) -> np.ndarray:
        """Logits conditioned only on the beginning-of-sequence context."""

    def validate_tokens(self, tokens: Sequence[int]) -> list[int]:
        out = []
        for t in tokens:
            t = int(t)
            if not 0 <= t < self.vocab_size:
                raise ValueError(f"token id {t} outside vocabulary")
            out.append(t)
        return out


class NGramAdapter(ModelAdapter):
    """Wraps the reference back-off n-gram model.

    The model spec is a JSON document:
      {"order": int, "add_k": float, "vocab_size": int,
       "eos_token_id": int, "bos_token_id": int | null,
       "sequences": [[int, ...], ...],
       "charset": {"<char>": int, ...} | null}

    `charset` enables prompt_text sessions via per-character lookup.
    """

    def __init__(self, spec: dict):
        from kappa.backends import NGramModel

        self.model = NGramModel.train(
            corpus=spec["sequences"],
            order=int(spec["order"]),
            add_k=float(spec.get("add_k", 0.01)),
            vocab_size=spec.get("vocab_size"),
            eos_token_id=spec.get("eos_token_id"),
            bos_token_id=spec.get("bos_token_id"),
        )
        self.vocab_size = self.model.vocab_size
        self.eos_token_id = self.model.eos_token_id
        self.charset = spec.get("charset")

    @classmethod
    def from_path(cls, path: str) -> "NGramAdapter":
        with open(path, encoding="utf-8") as fp:
            return cls(json.load(fp))

    def encode_prompt(self, text: str) -> list[int]:
        if not self.charset:
            raise ValueError("this n-gram model has no charset; send tokens")
        try:
            return [self.charset[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"character {exc} not in the model charset")

    def next_logits(self, prefix: Sequence[int]) -> np.ndarray:
        return np.asarray(self.model.next_dist(list(prefix)), dtype=np.float64)

    def unconditional_logits(self) -> np.ndarray:
        return np.asarray(self.model.unconditional_dist(), dtype=np.float64)


class HFAdapter(ModelAdapter):
    """Causal language model served through transformers.

    The chat template (system prompt plus a reasoning instruction) is
    applied once at session open; generation never happens server-side.
    """

    def __init__(self, model_name: str, device: str = "cpu",
                 instruction: str = DEFAULT_INSTRUCTION):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForCausalLM.from_pretrained(model_name)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.instruction = instruction
        self.vocab_size = int(self.model.config.vocab_size)
        self.eos_token_id = int(self.tokenizer.eos_token_id)

    def encode_prompt(self, text: str) -> list[int]:
        content = f"{text}\n{self.instruction}" if self.instruction else text
        if self.tokenizer.chat_template:
            return self.tokenizer.apply_chat_template(
                [{"role": "user", "content": content}],
                add_generation_prompt=True,
            )
        return self.tokenizer.encode(content)

    def _logits(self, ids: Sequence[int]) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            batch = torch.tensor([list(ids)], device=self.device)
            out = self.model(batch).logits[0, -1]
        return out.detach().cpu().double().numpy()

    def next_logits(self, prefix: Sequence[int]) -> np.ndarray:
        return self._logits(prefix)

    def unconditional_logits(self) -> np.ndarray:
        bos = self.tokenizer.bos_token_id
        if bos is None:
            bos = self.eos_token_id
        return self._logits([int(bos)])


def adapter_from_env(model_spec: str, **kwargs) -> ModelAdapter:
    """Build an adapter from a 'kind:locator' string.

    ngram:/path/to/spec.json or hf:org/model-name
    """
    kind, _, locator = model_spec.partition(":")
    if kind == "ngram":
        return NGramAdapter.from_path(locator)
    if kind == "hf":
        return HFAdapter(locator, **kwargs)
    raise ValueError(f"unknown model spec {model_spec!r}")
