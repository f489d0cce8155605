"""HTTP service exposing next-token distributions over the logits wire
protocol consumed by the decoding engine's remote backend."""

from .adapters import HFAdapter, ModelAdapter, NGramAdapter, adapter_from_env
from .app import create_app, payload_from_logits

__version__ = "0.1.0"

__all__ = [
    "ModelAdapter",
    "NGramAdapter",
    "HFAdapter",
    "adapter_from_env",
    "create_app",
    "payload_from_logits",
    "__version__",
]
