"""Metrics, task files, experiment comparison, and trace auditing.

Task files are JSON arrays of {prompt, answer, backend_params}; reports
are JSON documents with a schema_version field and round-trip exactly
through json. Wall time is recorded in memory and in logs but kept out
of per-run metrics files so repeated runs produce identical artifacts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .backends import (
    ANSWER_CLOSE_ID,
    ANSWER_OPEN_ID,
    NGramModel,
    PlantedModel,
    PlantedTask,
    RemoteClient,
    RemoteModel,
    TokenModel,
)
from .distributions import ENTROPY_EPS, floor_distribution
from .engine import RunConfig, RunResult, run
from .errors import ConfigError, ContractViolation
from .recording import RunMetrics, RunTrace
from .signals import SignalWeights, instantaneous_score, zscore_normalize

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


# --- scalar metrics ----------------------------------------------------


def compute_mcost(peak: float, peak_greedy: float) -> float:
    """Peak-memory cost relative to the greedy baseline."""
    if peak_greedy <= 0:
        raise ContractViolation("greedy peak must be positive")
    return peak / peak_greedy


def compute_accuracy(hits: Sequence[bool]) -> float:
    if not hits:
        raise ContractViolation("accuracy over an empty task list")
    return sum(bool(h) for h in hits) / len(hits)


# --- tasks --------------------------------------------------------------


@dataclass
class Task:
    answer: list[int]
    backend_params: dict
    prompt: list[int] | None = None
    prompt_text: str | None = None

    def to_dict(self) -> dict:
        d = {
            "prompt": self.prompt if self.prompt_text is None else self.prompt_text,
            "answer": list(self.answer),
            "backend_params": self.backend_params,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Task":
        prompt = d.get("prompt")
        if isinstance(prompt, str):
            return cls(
                answer=list(d["answer"]),
                backend_params=dict(d["backend_params"]),
                prompt_text=prompt,
            )
        return cls(
            answer=list(d["answer"]),
            backend_params=dict(d["backend_params"]),
            prompt=list(prompt) if prompt is not None else None,
        )


def load_tasks(path: str) -> list[Task]:
    with open(path, encoding="utf-8") as fp:
        data = json.load(fp)
    if not isinstance(data, list) or not data:
        raise ConfigError("task file must be a nonempty JSON array")
    return [Task.from_dict(d) for d in data]


def dump_tasks(tasks: Sequence[Task], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump([t.to_dict() for t in tasks], fp, sort_keys=True)
        fp.write("\n")


_PLANTED_FIELDS = (
    "seed", "vocab_size", "prompt_len", "n_profiles", "quality_decay",
    "separation", "noise_scale", "base_scale", "ramp_len", "min_len",
    "max_len", "answer_len", "answer_skill",
)


def make_planted_tasks(n_tasks: int, seed: int, **planted_kwargs) -> list[Task]:
    """Synthetic suite: one planted-quality problem per task."""
    tasks = []
    for ti in range(n_tasks):
        ptask = PlantedTask(seed=seed + ti, **planted_kwargs)
        params = {"kind": "planted"}
        params.update({k: getattr(ptask, k) for k in _PLANTED_FIELDS})
        params["marker_open"] = ANSWER_OPEN_ID
        params["marker_close"] = ANSWER_CLOSE_ID
        tasks.append(Task(
            prompt=list(ptask.prompt),
            answer=list(ptask.correct_answer),
            backend_params=params,
        ))
    return tasks


def make_backend(task: Task) -> tuple[TokenModel, list[int]]:
    """Build the task's token model and resolve its prompt tokens."""
    params = dict(task.backend_params)
    kind = params.pop("kind", None)
    params.pop("marker_open", None)
    params.pop("marker_close", None)
    if kind == "planted":
        ptask = PlantedTask(**{k: params[k] for k in _PLANTED_FIELDS if k in params})
        model = PlantedModel(ptask)
        prompt = list(ptask.prompt)
        if task.prompt is not None and list(task.prompt) != prompt:
            raise ConfigError("task prompt disagrees with the planted seed")
        return model, prompt
    if kind == "ngram":
        model = NGramModel.train(
            corpus=params["corpus"],
            order=params["order"],
            add_k=params.get("add_k", 0.01),
            vocab_size=params.get("vocab_size"),
            eos_token_id=params.get("eos_token_id"),
            bos_token_id=params.get("bos_token_id"),
        )
        if task.prompt is None:
            raise ConfigError("n-gram tasks need token prompts")
        return model, list(task.prompt)
    if kind == "remote":
        client = RemoteClient(params["base_url"], params.get("timeout", 30.0))
        model = RemoteModel.open(
            client, prompt_tokens=task.prompt, prompt_text=task.prompt_text
        )
        return model, list(model.prompt_tokens)
    raise ConfigError(f"unknown backend kind {kind!r}")


# --- answers -------------------------------------------------------------


def extract_answer(tokens: Sequence[int], task: Task) -> list[int] | None:
    """Content of the last complete marker pair; None when absent."""
    open_id = task.backend_params.get("marker_open")
    close_id = task.backend_params.get("marker_close")
    if open_id is None or close_id is None:
        return None
    best: list[int] | None = None
    start: int | None = None
    for pos, tok in enumerate(tokens):
        if tok == open_id:
            start = pos
        elif tok == close_id and start is not None:
            best = list(tokens[start + 1:pos])
            start = None
    return best


def evaluate_run(result: RunResult, task: Task) -> bool:
    answer = extract_answer(result.final_tokens, task)
    hit = answer == list(task.answer)
    result.metrics.accuracy_hit = hit
    return hit


# --- running suites -------------------------------------------------------


def task_seed(base_seed: int, task_index: int) -> int:
    """Shared seed discipline: every strategy sees the same per-task seed."""
    return (base_seed + 0x5D1 * task_index) % (2 ** 64)


def run_task(task: Task, cfg: RunConfig) -> RunResult:
    model, prompt = make_backend(task)
    try:
        result = run(model, prompt, cfg)
    finally:
        model.close()
    evaluate_run(result, task)
    return result


def run_suite(tasks: Sequence[Task], cfg: RunConfig) -> list[RunResult]:
    results = []
    for ti, task in enumerate(tasks):
        cfg_t = cfg.with_overrides(seed=task_seed(cfg.seed, ti))
        results.append(run_task(task, cfg_t))
    return results


def aggregate_metrics(results: Sequence[RunResult]) -> dict:
    hits = [r.metrics.accuracy_hit for r in results]
    return {
        "accuracy": compute_accuracy(hits),
        "total_tokens_mean": float(np.mean([r.metrics.total_tokens for r in results])),
        "final_branch_tokens_mean": float(
            np.mean([r.metrics.final_branch_tokens for r in results])
        ),
        "peak_mem_proxy_mean": float(
            np.mean([r.metrics.peak_mem_proxy for r in results])
        ),
        "wall_time_s_mean": float(np.mean([r.metrics.wall_time_s for r in results])),
    }


def _branch_lengths(trace: RunTrace) -> dict[int, int]:
    counts: dict[int, int] = {}
    for rec in trace.records:
        for key in rec.get("tok", ()):
            counts[int(key)] = counts.get(int(key), 0) + 1
    return counts


def _check_kappa_vs_bon(kappa_res: RunResult, bon_res: RunResult,
                        n_branches: int) -> None:
    """Accounting inequality: progressive pruning must beat full BoN
    whenever every branch outlives the gating horizon."""
    c = kappa_res.trace.meta.get("cutoff_c", 0)
    tau = kappa_res.trace.meta["config"]["horizon_tau"]
    lengths = list(_branch_lengths(bon_res.trace).values())
    if n_branches >= 2 and kappa_res.metrics.final_branch_tokens > c + tau \
            and lengths and min(lengths) > c + tau:
        if not kappa_res.metrics.total_tokens < bon_res.metrics.total_tokens:
            raise ContractViolation(
                "pruned run used at least as many tokens as full BoN"
            )


def compare_strategies(tasks: Sequence[Task], configs: Sequence[RunConfig]) -> dict:
    """Run every config over the suite and build a comparison report."""
    kinds = {t.backend_params.get("kind") for t in tasks}
    if len(kinds) != 1:
        raise ConfigError(f"mixed backends in one comparison: {sorted(map(str, kinds))}")
    seen = set()
    for cfg in configs:
        if cfg.strategy in seen:
            raise ConfigError(f"duplicate strategy {cfg.strategy!r} in comparison")
        seen.add(cfg.strategy)

    all_results: dict[str, list[RunResult]] = {}
    rows = []
    for cfg in configs:
        results = run_suite(tasks, cfg)
        all_results[cfg.strategy] = results
        row = {
            "strategy": cfg.strategy,
            "n_branches": cfg.n_branches,
            "horizon_tau": cfg.horizon_tau,
            "seed": cfg.seed,
        }
        row.update(aggregate_metrics(results))
        rows.append(row)

    bon_row = next((r for r in rows if r["strategy"] == "bon"), None)
    greedy_row = next((r for r in rows if r["strategy"] == "greedy"), None)
    for row in rows:
        if bon_row is not None:
            tok_ratio = row["total_tokens_mean"] / bon_row["total_tokens_mean"]
            mem_ratio = row["peak_mem_proxy_mean"] / bon_row["peak_mem_proxy_mean"]
            row["token_ratio_vs_bon"] = tok_ratio
            row["token_reduction_vs_bon"] = 1.0 - tok_ratio
            row["mem_ratio_vs_bon"] = mem_ratio
            row["mem_reduction_vs_bon"] = 1.0 - mem_ratio
        else:
            row["token_ratio_vs_bon"] = None
            row["token_reduction_vs_bon"] = None
            row["mem_ratio_vs_bon"] = None
            row["mem_reduction_vs_bon"] = None
        row["mcost_vs_greedy"] = (
            compute_mcost(row["peak_mem_proxy_mean"], greedy_row["peak_mem_proxy_mean"])
            if greedy_row is not None else None
        )

    if "kappa" in all_results and "bon" in all_results:
        kappa_cfg = next(c for c in configs if c.strategy == "kappa")
        for k_res, b_res in zip(all_results["kappa"], all_results["bon"]):
            _check_kappa_vs_bon(k_res, b_res, kappa_cfg.n_branches)

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "backend_kind": next(iter(kinds)),
        "n_tasks": len(tasks),
        "rows": rows,
    }


def sweep_hyperparameters(
    tasks: Sequence[Task],
    base_cfg: RunConfig,
    alphas: Sequence[float],
    windows: Sequence[int],
    buckets: Sequence[int],
    weight_triples: Sequence[tuple[float, float, float]],
) -> dict:
    """Grid search over the scoring hyperparameters."""
    rows = []
    for alpha in alphas:
        for w in windows:
            for m in buckets:
                for wts in weight_triples:
                    cfg = base_cfg.with_overrides(
                        signal=base_cfg.signal.__class__(
                            window_w=w, mom_buckets_m=m, ema_alpha=alpha,
                            clamp_bound=base_cfg.signal.clamp_bound,
                        ),
                        weights=SignalWeights(*wts),
                    )
                    results = run_suite(tasks, cfg)
                    row = {
                        "ema_alpha": alpha,
                        "window_w": w,
                        "mom_buckets_m": m,
                        "weights": list(wts),
                    }
                    row.update(aggregate_metrics(results))
                    rows.append(row)
    return {"schema_version": REPORT_SCHEMA_VERSION, "rows": rows}


# --- report files ----------------------------------------------------------


def write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(report, fp, sort_keys=True, indent=2)
        fp.write("\n")


def read_report(path: str) -> dict:
    with open(path, encoding="utf-8") as fp:
        report = json.load(fp)
    if report.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ConfigError("unsupported report schema version")
    return report


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    widths = [
        max(len(col), *(len(_fmt(r.get(col))) for r in rows)) for col in columns
    ]
    lines = ["  ".join(col.ljust(w) for col, w in zip(columns, widths))]
    for r in rows:
        lines.append(
            "  ".join(_fmt(r.get(col)).ljust(w) for col, w in zip(columns, widths))
        )
    return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


# --- trace auditing ----------------------------------------------------------


def replay_trajectory_scores(trace: RunTrace) -> float:
    """Recompute z-scores, instantaneous and trajectory scores from the
    logged raw signals; return the largest absolute deviation from the
    logged values."""
    cfg = trace.meta["config"]
    wts = SignalWeights(**cfg["weights"])
    bound = cfg["signal"]["clamp_bound"]
    c = trace.meta["cutoff_c"]
    history: dict[str, list[tuple[int, float]]] = {}
    worst = 0.0
    for rec in trace.records:
        if rec.get("phase") != "gate":
            continue
        keys = sorted(rec["sig"], key=int)
        if not keys:
            continue
        ema_z = zscore_normalize([rec["sig"][k]["ema"] for k in keys], bound)
        conf_z = zscore_normalize([rec["sig"][k]["C"] for k in keys], bound)
        ent_z = zscore_normalize([rec["sig"][k]["H"] for k in keys], bound)
        for pos, k in enumerate(keys):
            s = instantaneous_score(ema_z[pos], conf_z[pos], ent_z[pos], wts)
            worst = max(worst, abs(s - rec["s"][k]))
            history.setdefault(k, []).append((rec["sig_t"], s))
            hist = history[k]
            denom = sum(t for t, _ in hist)
            traj = sum(t * s_ for t, s_ in hist) / denom
            if hist[0][0] != c:
                raise ContractViolation("gate history does not start at c")
            worst = max(worst, abs(traj - rec["S"][k]))
    return worst


def truncation_diagnostic(
    p_full: np.ndarray, q_full: np.ndarray, ks: Sequence[int]
) -> list[dict]:
    """K-sweep: how closely top-K + residual payloads track the
    full-support KL and entropy."""
    q_full = floor_distribution(np.asarray(q_full, dtype=np.float64))
    p_full = np.asarray(p_full, dtype=np.float64)
    kl_ref = _kernels.kl_div(p_full, q_full)
    ent_ref = _kernels.entropy(p_full, ENTROPY_EPS)

    def truncate(dist: np.ndarray, k: int) -> np.ndarray:
        order = np.argsort(-dist, kind="stable")[:k]
        out = np.zeros(dist.size + 1)
        out[order] = dist[order]
        out[-1] = max(1.0 - out.sum(), 0.0)
        return out

    rows = []
    for k in ks:
        p_t = truncate(p_full, k)
        q_t = floor_distribution(truncate(q_full, k))
        kl_t = _kernels.kl_div(p_t, q_t)
        ent_t = _kernels.entropy(p_t, ENTROPY_EPS)
        rows.append({
            "K": int(k),
            "kl_full": kl_ref,
            "kl_truncated": kl_t,
            "kl_abs_err": abs(kl_t - kl_ref),
            "entropy_full": ent_ref,
            "entropy_truncated": ent_t,
            "entropy_abs_err": abs(ent_t - ent_ref),
        })
    return rows


# re-exported for the module's public surface
__all__ = [
    "RunMetrics",
    "RunTrace",
    "Task",
    "compute_mcost",
    "compute_accuracy",
    "extract_answer",
    "evaluate_run",
    "load_tasks",
    "dump_tasks",
    "make_planted_tasks",
    "make_backend",
    "run_task",
    "run_suite",
    "aggregate_metrics",
    "compare_strategies",
    "sweep_hyperparameters",
    "write_report",
    "read_report",
    "format_table",
    "replay_trajectory_scores",
    "truncation_diagnostic",
    "task_seed",
]
