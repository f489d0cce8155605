#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times each hot kernel on synthetic data, then one full decoding run per
strategy under each backend. Usage:

    python benchmarks/bench_kernels.py [--dim 256] [--repeat 20000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kappa._kernels import available_backends


def time_op(fn, repeat: int) -> float:
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def bench_kernels(dim: int, repeat: int) -> list[dict]:
    rng = np.random.default_rng(0)
    logits = rng.standard_normal(dim)
    p = rng.dirichlet(np.ones(dim))
    q = rng.dirichlet(np.ones(dim))
    rows = []
    for name, mod in available_backends().items():
        cases = {
            "softmax_temp": lambda m=mod: m.softmax_temp(logits, 0.7),
            "kl_div": lambda m=mod: m.kl_div(p, q),
            "entropy": lambda m=mod: m.entropy(p),
            "max_prob": lambda m=mod: m.max_prob(p),
            "filter_top_k_top_p": lambda m=mod: m.filter_top_k_top_p(p, 20, 0.95),
            "sample_index": lambda m=mod: m.sample_index(p, 0.371),
        }
        for op, fn in cases.items():
            fn()  # warm up
            rows.append({
                "backend": name,
                "op": op,
                "us_per_call": time_op(fn, repeat) * 1e6,
            })
    return rows


def bench_end_to_end() -> list[dict]:
    import importlib

    import kappa._kernels as kernels
    from kappa.backends import PlantedModel, PlantedTask
    from kappa.distributions import SamplerConfig
    from kappa.engine import RunConfig, run

    task = PlantedTask(seed=3, prompt_len=64, min_len=300, max_len=340)
    model = PlantedModel(task)
    rows = []
    originals = {name: getattr(kernels, name) for name in (
        "softmax_temp", "kl_div", "entropy", "max_prob",
        "filter_top_k_top_p", "sample_index",
    )}
    try:
        for name, mod in available_backends().items():
            for fn_name in originals:
                setattr(kernels, fn_name, getattr(mod, fn_name))
            importlib.reload(importlib.import_module("kappa.engine"))
            from kappa.engine import run as run_fn, RunConfig as RC

            for strategy in ("greedy", "bon", "kappa"):
                cfg = RC(strategy=strategy, n_branches=8, horizon_tau=16,
                         c_max=24, seed=1,
                         sampler=SamplerConfig(max_new_tokens=400))
                start = time.perf_counter()
                res = run_fn(model, list(task.prompt), cfg)
                elapsed = time.perf_counter() - start
                rows.append({
                    "backend": name,
                    "strategy": strategy,
                    "tokens": res.metrics.total_tokens,
                    "tokens_per_s": res.metrics.total_tokens / elapsed,
                })
    finally:
        for fn_name, fn in originals.items():
            setattr(kernels, fn_name, fn)
        importlib.reload(importlib.import_module("kappa.engine"))
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--repeat", type=int, default=20_000)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    if "cython" not in backends:
        print("note: compiled kernels missing; run pip install -e . first")

    print(f"\nper-kernel timing (dim={args.dim}, {args.repeat} calls):")
    rows = bench_kernels(args.dim, args.repeat)
    ops = sorted({r["op"] for r in rows})
    for op in ops:
        line = f"  {op:20s}"
        per = {r["backend"]: r["us_per_call"] for r in rows if r["op"] == op}
        for name in sorted(per):
            line += f"  {name}: {per[name]:8.2f} us"
        if len(per) == 2:
            line += f"  speedup: {per['python'] / per['cython']:.2f}x"
        print(line)

    print("\nend-to-end decoding runs:")
    for row in bench_end_to_end():
        print(f"  {row['backend']:8s} {row['strategy']:8s} "
              f"{row['tokens']:6d} tokens  {row['tokens_per_s']:10.0f} tok/s")


if __name__ == "__main__":
    main()
