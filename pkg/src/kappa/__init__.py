"""Branch-pruned decoding strategies with a benchmark harness.

Strategies: greedy, full best-of-N (negative-perplexity selection), a
self-truncation proxy, and KAPPA progressive pruning driven by KL
information gain, confidence, and entropy signals.
"""

from ._kernels import backend_name as kernel_backend
from .distributions import (
    LogitVec,
    SamplerConfig,
    TokenDist,
    confidence,
    entropy,
    filter_top_k_top_p,
    kl_divergence,
    sample_token,
    softmax_with_temperature,
)
from .engine import (
    Branch,
    RunConfig,
    RunResult,
    STRATEGIES,
    negative_perplexity,
    run,
    run_bon,
    run_greedy,
    run_kappa,
    run_stbon_proxy,
)
from .errors import BackendFault, ConfigError, ContractViolation, KappaError
from .recording import RunMetrics, RunTrace
from .signals import SignalConfig, SignalState, SignalWeights

__version__ = "0.1.0"

__all__ = [
    "kernel_backend",
    "TokenDist",
    "LogitVec",
    "SamplerConfig",
    "softmax_with_temperature",
    "kl_divergence",
    "entropy",
    "confidence",
    "filter_top_k_top_p",
    "sample_token",
    "RunConfig",
    "RunResult",
    "RunMetrics",
    "RunTrace",
    "Branch",
    "STRATEGIES",
    "run",
    "run_greedy",
    "run_bon",
    "run_stbon_proxy",
    "run_kappa",
    "negative_perplexity",
    "SignalConfig",
    "SignalState",
    "SignalWeights",
    "KappaError",
    "BackendFault",
    "ConfigError",
    "ContractViolation",
    "__version__",
]
