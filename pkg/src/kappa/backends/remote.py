"""HTTP client for the next-token logits wire protocol.

Payloads carry the top-K tokens with natural-log probabilities plus one
aggregate residual. The client rebuilds a (vocab_size + 1)-dimensional
distribution whose last slot is the residual pseudo-token: signals are
computed over that support, while the pseudo-token is masked out of
sampling. With K = vocab_size the residual is negligible and signals
match a local computation.

Wire endpoints (JSON over HTTP):
  POST   /v1/session       {prompt_text | prompt_tokens}
                            -> {session_id, vocab_size, eos_token_id,
                                prompt_tokens}
  POST   /v1/next          {session_id, prefix_tokens} -> payload
  GET    /v1/unconditional ?session_id=... -> payload
  DELETE /v1/session/{id}

prefix_tokens is the full conditioning sequence and must extend the
session's prompt tokens. Token ids are the server tokenizer's; the
client never re-tokenizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from ..errors import BackendFault, ContractViolation
from .base import TokenModel

MASS_TOL = 1e-4
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class RemoteSession:
    session_id: str
    vocab_size: int
    eos_token_id: int
    prompt_tokens: tuple[int, ...]


def reconstruct_probs(payload: dict, vocab_size: int) -> np.ndarray:
    """Full-support probabilities (vocab_size + 1 slots) from a payload.

    Rejects payloads whose total mass falls outside [1 - 1e-4, 1 + 1e-4]
    or that reference out-of-range or duplicate token ids. The surviving
    mass is renormalized exactly.
    """
    try:
        top = payload["top"]
        residual_lp = float(payload["residual_logprob"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendFault(f"malformed payload: {exc}") from exc
    probs = np.zeros(vocab_size + 1)
    seen: set[int] = set()
    for item in top:
        try:
            tok, lp = int(item[0]), float(item[1])
        except (TypeError, ValueError, IndexError) as exc:
            raise BackendFault(f"malformed payload entry: {item!r}") from exc
        if not 0 <= tok < vocab_size:
            raise BackendFault(f"token id {tok} outside vocabulary")
        if tok in seen:
            raise BackendFault(f"duplicate token id {tok} in payload")
        seen.add(tok)
        probs[tok] = np.exp(lp)
    probs[vocab_size] = np.exp(residual_lp)
    mass = float(probs.sum())
    if not (1.0 - MASS_TOL <= mass <= 1.0 + MASS_TOL):
        raise BackendFault(f"payload mass {mass} outside tolerance")
    probs /= mass
    return probs


class RemoteClient:
    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()

    def _request(self, method: str, path: str, **kwargs) -> dict:
        url = f"{self.base_url}{path}"
        try:
            resp = self._http.request(method, url, timeout=self.timeout, **kwargs)
        except requests.RequestException as exc:
            raise BackendFault(f"request to {url} failed: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendFault(
                f"{method} {path} returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json() if resp.content else {}
        except ValueError as exc:
            raise BackendFault(f"non-JSON response from {url}") from exc

    def open_session(
        self,
        prompt_tokens: Sequence[int] | None = None,
        prompt_text: str | None = None,
    ) -> RemoteSession:
        if (prompt_tokens is None) == (prompt_text is None):
            raise ContractViolation(
                "exactly one of prompt_tokens / prompt_text is required"
            )
        body: dict = {}
        if prompt_tokens is not None:
            body["prompt_tokens"] = [int(t) for t in prompt_tokens]
        else:
            body["prompt_text"] = prompt_text
        data = self._request("POST", "/v1/session", json=body)
        try:
            return RemoteSession(
                session_id=str(data["session_id"]),
                vocab_size=int(data["vocab_size"]),
                eos_token_id=int(data["eos_token_id"]),
                prompt_tokens=tuple(int(t) for t in data["prompt_tokens"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendFault(f"malformed session response: {exc}") from exc

    def next_payload(self, session: RemoteSession, prefix_tokens: Sequence[int]) -> dict:
        return self._request(
            "POST",
            "/v1/next",
            json={
                "session_id": session.session_id,
                "prefix_tokens": [int(t) for t in prefix_tokens],
            },
        )

    def unconditional_payload(self, session: RemoteSession) -> dict:
        return self._request(
            "GET", "/v1/unconditional", params={"session_id": session.session_id}
        )

    def close_session(self, session: RemoteSession) -> None:
        self._request("DELETE", f"/v1/session/{session.session_id}")


class RemoteModel(TokenModel):
    """TokenModel over an open remote session.

    The declared vocabulary is the server's plus one residual slot; the
    residual id is masked from sampling.
    """

    def __init__(self, client: RemoteClient, session: RemoteSession):
        self.client = client
        self.session = session
        self.server_vocab_size = session.vocab_size
        self.vocab_size = session.vocab_size + 1
        self.eos_token_id = session.eos_token_id
        self.masked_token_ids = (session.vocab_size,)

    @classmethod
    def open(
        cls,
        client: RemoteClient,
        prompt_tokens: Sequence[int] | None = None,
        prompt_text: str | None = None,
    ) -> "RemoteModel":
        return cls(client, client.open_session(prompt_tokens, prompt_text))

    @property
    def prompt_tokens(self) -> tuple[int, ...]:
        return self.session.prompt_tokens

    def _to_logits(self, payload: dict) -> np.ndarray:
        probs = reconstruct_probs(payload, self.server_vocab_size)
        return np.log(probs + _LOG_FLOOR)

    def next_dist(self, prefix: Sequence[int]) -> np.ndarray:
        return self._to_logits(self.client.next_payload(self.session, prefix))

    def unconditional_dist(self) -> np.ndarray:
        return self._to_logits(self.client.unconditional_payload(self.session))

    def close(self) -> None:
        try:
            self.client.close_session(self.session)
        except BackendFault:
            pass
