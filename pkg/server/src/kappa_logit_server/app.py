"""FastAPI application implementing the logits wire protocol.

Endpoints:
  POST   /v1/session        {prompt_text | prompt_tokens}
  POST   /v1/next           {session_id, prefix_tokens}
  GET    /v1/unconditional  ?session_id=...
  DELETE /v1/session/{id}

Payloads carry the top-K tokens as natural-log probabilities plus one
aggregate residual; the server enforces the mass check before replying.
Requests within one session are serialized; sessions expire after a
configurable idle timeout. The server never samples.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .adapters import ModelAdapter

MASS_TOL = 1e-4
_LOG_FLOOR = 1e-300


class SessionRequest(BaseModel):
    prompt_text: str | None = None
    prompt_tokens: list[int] | None = None


class NextRequest(BaseModel):
    session_id: str
    prefix_tokens: list[int]


@dataclass
class Session:
    session_id: str
    prompt_tokens: list[int]
    last_used: float
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_s: float):
        self.ttl_s = ttl_s
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, prompt_tokens: list[int]) -> Session:
        session = Session(
            session_id=str(uuid.uuid4()),
            prompt_tokens=prompt_tokens,
            last_used=time.monotonic(),
        )
        with self._lock:
            self._expire()
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            self._expire()
            session = self._sessions.get(session_id)
            if session is not None:
                session.last_used = time.monotonic()
            return session

    def drop(self, session_id: str) -> bool:
        with self._lock:
            return self._sessions.pop(session_id, None) is not None

    def _expire(self) -> None:
        cutoff = time.monotonic() - self.ttl_s
        stale = [k for k, s in self._sessions.items() if s.last_used < cutoff]
        for k in stale:
            del self._sessions[k]


def payload_from_logits(logits: np.ndarray, k: int) -> dict:
    """Top-K token/logprob pairs plus the aggregate residual."""
    z = logits - logits.max()
    probs = np.exp(z)
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")[:k]
    top = [[int(i), float(np.log(max(probs[i], _LOG_FLOOR)))] for i in order]
    residual = max(1.0 - float(probs[order].sum()), _LOG_FLOOR)
    payload = {"top": top, "residual_logprob": float(np.log(residual))}
    mass = float(np.exp([lp for _, lp in top]).sum() + np.exp(payload["residual_logprob"]))
    if not (1.0 - MASS_TOL <= mass <= 1.0 + MASS_TOL):
        raise RuntimeError(f"payload mass {mass} failed the server-side check")
    return payload


def create_app(adapter: ModelAdapter, k: int | None = None,
               session_ttl_s: float = 3600.0) -> FastAPI:
    app = FastAPI(title="kappa-logit-server")
    store = SessionStore(session_ttl_s)
    top_k = min(k or adapter.vocab_size, adapter.vocab_size)

    @app.exception_handler(RequestValidationError)
    async def on_bad_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def bad_request(message: str) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": message})

    def not_found(message: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={"error": message})

    @app.post("/v1/session")
    def open_session(body: SessionRequest):
        if (body.prompt_text is None) == (body.prompt_tokens is None):
            return bad_request("exactly one of prompt_text / prompt_tokens")
        try:
            if body.prompt_text is not None:
                tokens = adapter.encode_prompt(body.prompt_text)
            else:
                tokens = adapter.validate_tokens(body.prompt_tokens)
        except ValueError as exc:
            return bad_request(str(exc))
        session = store.create(tokens)
        return {
            "session_id": session.session_id,
            "vocab_size": adapter.vocab_size,
            "eos_token_id": adapter.eos_token_id,
            "prompt_tokens": session.prompt_tokens,
        }

    @app.post("/v1/next")
    def next_dist(body: NextRequest):
        session = store.get(body.session_id)
        if session is None:
            return not_found("unknown session")
        try:
            prefix = adapter.validate_tokens(body.prefix_tokens)
        except ValueError as exc:
            return bad_request(str(exc))
        if prefix[:len(session.prompt_tokens)] != session.prompt_tokens:
            return bad_request("prefix_tokens must extend the session prompt")
        with session.lock:
            logits = adapter.next_logits(prefix)
        return payload_from_logits(logits, top_k)

    @app.get("/v1/unconditional")
    def unconditional(session_id: str):
        session = store.get(session_id)
        if session is None:
            return not_found("unknown session")
        with session.lock:
            logits = adapter.unconditional_logits()
        return payload_from_logits(logits, top_k)

    @app.delete("/v1/session/{session_id}")
    def close_session(session_id: str):
        if not store.drop(session_id):
            return not_found("unknown session")
        return {}

    return app
