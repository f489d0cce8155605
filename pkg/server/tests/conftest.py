"""Shared fixtures: arithmetic n-gram corpus and a live-socket server."""

from __future__ import annotations

import threading
import time

import pytest
import uvicorn

DIGITS = "0123456789"
FILLER = "ABCDEFGHIJKLMNOPQRST"
CHARSET = {ch: i for i, ch in enumerate(DIGITS)}
CHARSET.update({"+": 10, "=": 11, "[": 12, "]": 13, ";": 14})
CHARSET.update({ch: 15 + i for i, ch in enumerate(FILLER)})
EOS_ID = 35
VOCAB_SIZE = 36
MARKER_OPEN = CHARSET["["]
MARKER_CLOSE = CHARSET["]"]


def encode(text: str) -> list[int]:
    return [CHARSET[ch] for ch in text]


def answer_line(a: int, b: int) -> str:
    """One training line: question, answer echoed through the filler so a
    low-order model can carry it to the marked span at the end."""
    r = a + b
    body = "".join(f"{ch}{r}" for ch in FILLER)
    return f"{a}+{b}={r}{body}[{r}];"


def arithmetic_spec(repeats: int = 50) -> dict:
    sequences = []
    for a in range(10):
        for b in range(10):
            if a + b <= 9:
                ids = encode(answer_line(a, b)) + [EOS_ID]
                sequences.extend([ids] * repeats)
    return {
        "order": 5,
        "add_k": 0.001,
        "vocab_size": VOCAB_SIZE,
        "eos_token_id": EOS_ID,
        "bos_token_id": None,
        "sequences": sequences,
        "charset": CHARSET,
    }


@pytest.fixture(scope="session")
def arithmetic_adapter():
    from kappa_logit_server.adapters import NGramAdapter

    return NGramAdapter(arithmetic_spec())


class LiveServer:
    """uvicorn on an ephemeral local port, in a daemon thread."""

    def __init__(self, app):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0,
                                      log_level="warning")
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc):
        self._server.should_exit = True
        self._thread.join(timeout=10)
