"""Kernel backend selection.

The compiled extension is preferred when present; the NumPy fallback is
always importable. Set KAPPA_KERNELS=python or KAPPA_KERNELS=cython to
force a backend (forcing cython raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import _py

_forced = os.environ.get("KAPPA_KERNELS", "").strip().lower()

if _forced in ("python", "py", "pure"):
    _impl = _py
    backend_name = "python"
elif _forced in ("", "cython", "cy", "compiled"):
    try:
        from . import _cy as _impl  # type: ignore[no-redef]

        backend_name = "cython"
    except ImportError:
        if _forced:
            raise
        _impl = _py
        backend_name = "python"
else:
    raise RuntimeError(f"unknown KAPPA_KERNELS value: {_forced!r}")

softmax_temp = _impl.softmax_temp
kl_div = _impl.kl_div
entropy = _impl.entropy
max_prob = _impl.max_prob
filter_top_k_top_p = _impl.filter_top_k_top_p
sample_index = _impl.sample_index


def available_backends() -> dict[str, object]:
    """Importable kernel modules keyed by backend name."""
    out: dict[str, object] = {"python": _py}
    try:
        from . import _cy

        out["cython"] = _cy
    except ImportError:
        pass
    return out
