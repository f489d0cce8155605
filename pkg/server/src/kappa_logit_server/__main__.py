"""Entry point: configuration comes from the environment.

  KAPPA_SERVER_MODEL   ngram:/path/to/spec.json | hf:org/model (required)
  KAPPA_SERVER_K       top-K payload entries (default: full vocabulary)
  KAPPA_SERVER_PORT    listen port (default 8100)
  KAPPA_SERVER_HOST    bind address (default 127.0.0.1)
  KAPPA_SERVER_DEVICE  device for hf models (default cpu)
  KAPPA_SERVER_TTL     session idle timeout in seconds (default 3600)
"""

from __future__ import annotations

import os
import sys

import uvicorn

from .adapters import adapter_from_env
from .app import create_app


def main() -> int:
    model_spec = os.environ.get("KAPPA_SERVER_MODEL")
    if not model_spec:
        print("KAPPA_SERVER_MODEL is required (ngram:<path> or hf:<name>)",
              file=sys.stderr)
        return 2
    kwargs = {}
    if model_spec.startswith("hf:"):
        kwargs["device"] = os.environ.get("KAPPA_SERVER_DEVICE", "cpu")
    adapter = adapter_from_env(model_spec, **kwargs)
    k_env = os.environ.get("KAPPA_SERVER_K")
    app = create_app(
        adapter,
        k=int(k_env) if k_env else None,
        session_ttl_s=float(os.environ.get("KAPPA_SERVER_TTL", "3600")),
    )
    uvicorn.run(
        app,
        host=os.environ.get("KAPPA_SERVER_HOST", "127.0.0.1"),
        port=int(os.environ.get("KAPPA_SERVER_PORT", "8100")),
        log_level="info",
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
