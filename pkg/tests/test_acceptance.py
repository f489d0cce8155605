"""Acceptance suite.

One test per acceptance criterion, each printing a PASS/FAIL line with
its elapsed time (run with -s to watch them stream). Every tolerance is
pinned here; nothing is deferred to later calibration.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats

from kappa import harness
from kappa.backends import PlantedModel, PlantedTask
from kappa.distributions import (
    SamplerConfig,
    TokenDist,
    entropy,
    kl_divergence,
)
from kappa.engine import RunConfig, run, run_kappa
from kappa.scheduler import AliveSet, PruneSchedule, prune_to_target, survivor_target
from kappa.signals import (
    SignalConfig,
    SignalState,
    SignalWeights,
    ema_update_and_read,
    mom_smooth,
    trajectory_score,
    zscore_normalize,
)

from test_engine import lockstep_replay


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL  {name}  ({time.perf_counter() - start:.1f}s)")
        raise
    elapsed = time.perf_counter() - start
    print(f"PASS  {name}  ({elapsed:.1f}s)")
    assert elapsed < budget_s, f"{name} exceeded its {budget_s}s budget"


def test_numeric_oracles():
    """KL, entropy, MoM, EMA, z-score, and trajectory score match
    independent brute-force implementations on 1000 random inputs."""
    with criterion("numeric oracles (1000 random inputs each)", budget_s=10):
        rng = np.random.default_rng(2024)

        for _ in range(1000):
            n = int(rng.integers(2, 40))
            p = rng.dirichlet(np.ones(n))
            q = rng.dirichlet(np.ones(n))
            if rng.random() < 0.3:
                q[int(rng.integers(n))] = 0.0
                q /= q.sum()
            q_f = np.where(q == 0.0, 1e-12, q)
            q_f = q_f / q_f.sum()
            kl_brute = sum(
                pi * math.log(pi / qi) for pi, qi in zip(p, q_f) if pi > 0
            )
            assert kl_divergence(TokenDist(p), TokenDist(q)) == pytest.approx(
                kl_brute, abs=1e-9
            )
            ent_brute = -sum(pi * math.log(pi + 1e-12) for pi in p)
            assert entropy(TokenDist(p)) == pytest.approx(ent_brute, abs=1e-9)

        for _ in range(1000):
            n = int(rng.integers(1, 33))
            window = list(rng.normal(0, 5, n))
            m = int(rng.integers(1, 40))
            chunks = np.array_split(np.array(window), min(m, n))
            brute = float(np.median([c.mean() for c in chunks]))
            assert mom_smooth(window, m) == pytest.approx(brute, abs=1e-12)

        for _ in range(1000):
            alpha = float(rng.uniform(0.05, 0.95))
            xs = list(rng.normal(0, 3, int(rng.integers(1, 25))))
            state = SignalState.fresh(SignalConfig())
            for k, x in enumerate(xs, start=1):
                got = ema_update_and_read(state, x, alpha)
            raw = sum(
                alpha * (1 - alpha) ** (len(xs) - j) * xj
                for j, xj in enumerate(xs, start=1)
            )
            want = raw / (1 - (1 - alpha) ** len(xs))
            assert got == pytest.approx(want, abs=1e-12 * max(1.0, abs(want)))

        for _ in range(1000):
            n = int(rng.integers(1, 24))
            vals = list(rng.normal(rng.uniform(-3, 3), rng.uniform(0, 2), n))
            got = zscore_normalize(vals, 3.0)
            mean = np.mean(vals)
            std = float(np.std(vals))
            if std < 1e-12:
                want = [0.0] * n
            else:
                want = list(np.clip((np.array(vals) - mean) / max(std, 1e-8),
                                    -3.0, 3.0))
            assert np.allclose(got, want, atol=1e-9)

        for _ in range(1000):
            c = int(rng.integers(1, 50))
            length = int(rng.integers(1, 40))
            scores = list(rng.normal(0, 1, length))
            hist = list(zip(range(c, c + length), scores))
            denom = sum(range(c, c + length))
            brute = sum(t * s for t, s in hist) / denom
            assert trajectory_score(hist, c) == pytest.approx(brute, abs=1e-9)


def test_schedule_law():
    """Survivor targets are non-increasing and end at 1 for all
    N in [1,64], tau in [1,256]; pruning tracks the target exactly."""
    with criterion("schedule law over N in [1,64], tau in [1,256]", budget_s=5):
        for n in range(1, 65):
            for tau in range(1, 257):
                k = np.arange(1, tau + 1)
                r = np.maximum(1, n - (k * n) // tau)
                assert (np.diff(r) <= 0).all()
                assert r[-1] == 1
                assert r.max() <= n

        rng = np.random.default_rng(5)
        for _ in range(300):
            n = int(rng.integers(1, 65))
            tau = int(rng.integers(1, 257))
            sched = PruneSchedule(n_branches=n, cutoff_c=1, horizon_tau=tau)
            alive = AliveSet(tuple(range(n)))
            for t in range(1, tau + 1):
                target = survivor_target(sched, t)
                scores = {i: float(rng.random()) for i in alive}
                alive = prune_to_target(alive, scores, target)
                assert len(alive) == target
            assert len(alive) == 1


def test_token_accounting():
    """Exact token-accounting identities for every strategy over a
    50-task synthetic suite."""
    with criterion("token accounting identities on 50 tasks", budget_s=60):
        tasks = harness.make_planted_tasks(
            50, seed=700, prompt_len=24, min_len=100, max_len=140
        )
        n, tau = 5, 10
        sampler = SamplerConfig(max_new_tokens=192)
        for strategy in ("greedy", "bon", "stbon_proxy", "kappa"):
            cfg = RunConfig(strategy=strategy, n_branches=n, horizon_tau=tau,
                            c_max=16, seed=31, sampler=sampler)
            for result in harness.run_suite(tasks, cfg):
                total = result.metrics.total_tokens
                final_len = len(result.final_tokens)
                assert result.trace.count_sampled_tokens() == total
                if strategy == "greedy":
                    assert total == final_len
                elif strategy == "bon":
                    lengths = {}
                    for rec in result.trace.records:
                        for key in rec["tok"]:
                            lengths[key] = lengths.get(key, 0) + 1
                    assert total == sum(lengths.values())
                    assert len(lengths) == n
                else:
                    c = result.trace.meta["cutoff_c"]
                    assert final_len > c + tau
                    if strategy == "stbon_proxy":
                        assert total == n * (c + tau) + (final_len - (c + tau))
                    else:
                        alive_sizes = [
                            len(r["alive"]) for r in result.trace.records
                            if r["phase"] == "gate"
                        ]
                        assert total == n * c + sum(alive_sizes) + (
                            final_len - (c + tau)
                        )


def test_cost_reduction_bracketing():
    """On the default synthetic workload (N=20, c_max=64, tau=40, final
    lengths 900-1000), total-token reduction vs BoN lands in [0.85, 0.95]
    and peak-memory-proxy reduction in [0.40, 0.75]."""
    with criterion("cost reduction bracketing (default workload)", budget_s=300):
        tasks = harness.make_planted_tasks(6, seed=100)
        configs = [
            RunConfig(strategy=s, n_branches=20, horizon_tau=40, c_max=64,
                      seed=11)
            for s in ("greedy", "bon", "stbon_proxy", "kappa")
        ]
        report = harness.compare_strategies(tasks, configs)
        rows = {r["strategy"]: r for r in report["rows"]}
        for res in harness.run_suite(tasks[:1], configs[-1]):
            assert 900 <= len(res.final_tokens) <= 1000
        tok_red = rows["kappa"]["token_reduction_vs_bon"]
        mem_red = rows["kappa"]["mem_reduction_vs_bon"]
        print(f"  token reduction vs BoN: {tok_red:.4f}  "
              f"memory reduction vs BoN: {mem_red:.4f}")
        assert 0.85 <= tok_red <= 0.95
        assert 0.40 <= mem_red <= 0.75


def _selection_hits(n_branches: int, runs: int, seed0: int,
                    separation: float) -> list[int]:
    task = PlantedTask(seed=42, prompt_len=32, min_len=160, max_len=200,
                       separation=separation)
    model = PlantedModel(task)
    survivors = []
    hits = 0
    for r in range(runs):
        cfg = RunConfig(
            strategy="kappa", n_branches=n_branches, horizon_tau=40, c_max=64,
            seed=seed0 + r, sampler=SamplerConfig(max_new_tokens=256),
        )
        res = run_kappa(model, list(task.prompt), cfg)
        first = res.trace.records[0]["tok"]
        entries = [first[str(i)] for i in range(n_branches)]
        hits += model.is_best_quality(entries, res.final_branch)
        survivors.append(res.final_branch)
    return hits, survivors


def test_selection_quality():
    """High separation: the planted-best branch is selected at >= 3x the
    1/N random rate for N in {5,10,20} over 200 seeded runs each. Zero
    separation: the survivor distribution is uniform (chi-square
    p > 0.01 over 1000 runs). Ties between branches that drew the same
    quality profile count as hits; such branches are indistinguishable
    by construction."""
    with criterion("selection quality (planted backend)", budget_s=600):
        for n in (5, 10, 20):
            hits, _ = _selection_hits(n, runs=200, seed0=1000 * n,
                                      separation=6.0)
            rate = hits / 200
            print(f"  N={n}: planted-best rate {rate:.3f} "
                  f"(threshold {3 / n:.3f})")
            assert rate >= 3 / n

        _, survivors = _selection_hits(5, runs=1000, seed0=777_000,
                                       separation=0.0)
        counts = np.bincount(survivors, minlength=5)
        p_value = stats.chisquare(counts).pvalue
        print(f"  delta=0 survivor counts {counts.tolist()}, "
              f"chi-square p={p_value:.3f}")
        assert p_value > 0.01


def test_determinism_and_prune_isolation():
    """20 repeated runs per strategy are bitwise identical (modulo wall
    time); the survivor's prefix equals its no-pruning lockstep replay."""
    with criterion("determinism and prune isolation", budget_s=120):
        task = PlantedTask(seed=5, prompt_len=16, min_len=40, max_len=60)
        model = PlantedModel(task)
        prompt = list(task.prompt)
        sampler = SamplerConfig(max_new_tokens=96)
        for strategy in ("greedy", "bon", "stbon_proxy", "kappa"):
            cfg = RunConfig(strategy=strategy, n_branches=4, horizon_tau=8,
                            c_max=12, seed=17, sampler=sampler)
            views = [
                run(model, prompt, cfg).deterministic_view() for _ in range(20)
            ]
            assert all(v == views[0] for v in views[1:])

        for seed in range(40):
            cfg = RunConfig(strategy="kappa", n_branches=4, horizon_tau=8,
                            c_max=12, seed=seed, sampler=sampler)
            res = run_kappa(model, prompt, cfg)
            c = res.trace.meta["cutoff_c"]
            replay = lockstep_replay(model, prompt, cfg, steps=c + 8)
            head = res.final_tokens[:c + 8]
            assert head == replay[res.final_branch][:len(head)]
