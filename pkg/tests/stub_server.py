"""Minimal in-test HTTP server speaking the logits wire protocol.

Serves any TokenModel. Used to exercise the remote client without the
standalone server package.
"""

from __future__ import annotations

import json
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from kappa._kernels import softmax_temp


def payload_from_logits(logits: np.ndarray, k: int) -> dict:
    probs = softmax_temp(np.asarray(logits, dtype=float), 1.0)
    order = np.argsort(-probs, kind="stable")[:k]
    top = [[int(i), float(np.log(max(probs[i], 1e-300)))] for i in order]
    residual = max(1.0 - float(probs[order].sum()), 1e-300)
    return {"top": top, "residual_logprob": float(np.log(residual))}


class _Handler(BaseHTTPRequestHandler):
    server_version = "StubLogits/0.1"

    def log_message(self, *args):
        pass

    def _json(self, code: int, body: dict.__class__ | dict):
        data = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length) or b"{}")

    def do_POST(self):
        state = self.server.state  # type: ignore[attr-defined]
        if self.path == "/v1/session":
            body = self._read_body()
            tokens = body.get("prompt_tokens")
            if tokens is None:
                self._json(400, {"error": "prompt_tokens required by stub"})
                return
            sid = str(uuid.uuid4())
            state["sessions"][sid] = [int(t) for t in tokens]
            self._json(200, {
                "session_id": sid,
                "vocab_size": state["model"].vocab_size,
                "eos_token_id": state["model"].eos_token_id,
                "prompt_tokens": [int(t) for t in tokens],
            })
        elif self.path == "/v1/next":
            body = self._read_body()
            sid = body.get("session_id")
            prompt = state["sessions"].get(sid)
            if prompt is None:
                self._json(404, {"error": "unknown session"})
                return
            prefix = [int(t) for t in body.get("prefix_tokens", [])]
            if prefix[:len(prompt)] != prompt:
                self._json(400, {"error": "prefix must extend the prompt"})
                return
            logits = state["model"].next_dist(prefix)
            self._json(200, payload_from_logits(logits, state["k"]))
        else:
            self._json(404, {"error": "not found"})

    def do_GET(self):
        state = self.server.state  # type: ignore[attr-defined]
        parsed = urlparse(self.path)
        if parsed.path == "/v1/unconditional":
            sid = parse_qs(parsed.query).get("session_id", [None])[0]
            if sid not in state["sessions"]:
                self._json(404, {"error": "unknown session"})
                return
            logits = state["model"].unconditional_dist()
            self._json(200, payload_from_logits(logits, state["k"]))
        else:
            self._json(404, {"error": "not found"})

    def do_DELETE(self):
        state = self.server.state  # type: ignore[attr-defined]
        if self.path.startswith("/v1/session/"):
            sid = self.path.rsplit("/", 1)[-1]
            state["sessions"].pop(sid, None)
            self._json(200, {})
        else:
            self._json(404, {"error": "not found"})


class StubLogitServer:
    """Context manager: serves `model` on 127.0.0.1, exposes base_url."""

    def __init__(self, model, k: int | None = None):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self.httpd.state = {  # type: ignore[attr-defined]
            "model": model,
            "k": k if k is not None else model.vocab_size,
            "sessions": {},
        }
        self.base_url = f"http://127.0.0.1:{self.httpd.server_port}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self) -> "StubLogitServer":
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
        self._thread.join(timeout=5)
