"""NumPy reference implementations of the per-token hot kernels.

These are the semantics of record: the compiled extension in ``_cy.pyx``
mirrors each function and is checked against this module for parity.
All functions take contiguous float64 arrays and never mutate inputs.
"""

from __future__ import annotations

import numpy as np


def softmax_temp(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Temperature softmax, max-shifted for overflow safety."""
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return p


def kl_div(p: np.ndarray, q: np.ndarray) -> float:
    """Sum over p's support of p * ln(p/q). q must be strictly positive."""
    m = p > 0.0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def entropy(p: np.ndarray, eps: float = 1e-12) -> float:
    """-sum p * ln(p + eps). Zero entries contribute exactly 0."""
    return -float(np.sum(p * np.log(p + eps)))


def max_prob(p: np.ndarray) -> float:
    return float(p.max())


def filter_top_k_top_p(p: np.ndarray, k: int, top_p: float) -> np.ndarray:
    """Keep the top-k tokens, then the smallest descending-order prefix
    whose cumulative mass reaches top_p; renormalize the survivors.

    Ties in probability are broken toward the lower token id so the kept
    set is deterministic. At least one token always survives.
    """
    n = p.size
    k = min(k, n)
    order = np.argsort(-p, kind="stable")[:k]
    cum = np.cumsum(p[order])
    m = int(np.searchsorted(cum, top_p, side="left")) + 1
    m = min(m, k)
    keep = order[:m]
    out = np.zeros_like(p)
    out[keep] = p[keep]
    out /= out.sum()
    return out


def sample_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: smallest i with cumsum(p)[i] > u * sum(p)."""
    c = np.cumsum(p)
    idx = int(np.searchsorted(c, u * c[-1], side="right"))
    idx = min(idx, p.size - 1)
    while idx > 0 and p[idx] == 0.0:
        idx -= 1
    return idx
