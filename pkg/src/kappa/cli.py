"""Command-line interface.

Subcommands: make-tasks (synthetic suite generation), run (one strategy
over a task file), compare (strategy matrix), sweep (hyperparameter
grid), plot (reduction-ratio charts from a report file).

Configuration comes from an optional JSON file plus flag overrides.
Exit codes: 0 success, 2 usage or configuration error, 3 backend fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness
from .distributions import SamplerConfig
from .engine import STRATEGIES, RunConfig
from .errors import BackendFault, ConfigError, ContractViolation
from .signals import SignalConfig, SignalWeights

log = logging.getLogger("kappa")


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"weights need three comma-separated values: {text!r}")
    return parts[0], parts[1], parts[2]


def _parse_weight_grid(text: str) -> list[tuple[float, float, float]]:
    return [_parse_weights(chunk) for chunk in text.split(";") if chunk]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_config(args: argparse.Namespace, strategy: str) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fp:
            base = json.load(fp)
    base["strategy"] = strategy

    sampler = dict(base.pop("sampler", {}))
    for flag, key in (("temperature", "temperature"), ("top_k", "top_k"),
                      ("top_p", "top_p"), ("max_new_tokens", "max_new_tokens")):
        val = getattr(args, flag, None)
        if val is not None:
            sampler[key] = val

    signal = dict(base.pop("signal", {}))
    for flag, key in (("alpha", "ema_alpha"), ("window", "window_w"),
                      ("buckets", "mom_buckets_m")):
        val = getattr(args, flag, None)
        if val is not None:
            signal[key] = val

    weights = dict(base.pop("weights", {}))
    if getattr(args, "weights", None):
        w = _parse_weights(args.weights)
        weights = {"w_kl": w[0], "w_conf": w[1], "w_ent": w[2]}

    for flag, key in (("n", "n_branches"), ("tau", "horizon_tau"),
                      ("c_max", "c_max"), ("seed", "seed")):
        val = getattr(args, flag, None)
        if val is not None:
            base[key] = val

    try:
        return RunConfig(
            sampler=SamplerConfig(**sampler),
            signal=SignalConfig(**signal),
            weights=SignalWeights(**weights),
            **base,
        )
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


def _add_run_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--tasks", required=True, help="task file (JSON array)")
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--n", type=int, help="number of branches")
    sub.add_argument("--tau", type=int, help="pruning horizon")
    sub.add_argument("--c-max", dest="c_max", type=int, help="forced draft cutoff")
    sub.add_argument("--temperature", type=float)
    sub.add_argument("--top-k", dest="top_k", type=int)
    sub.add_argument("--top-p", dest="top_p", type=float)
    sub.add_argument("--max-new-tokens", dest="max_new_tokens", type=int)
    sub.add_argument("--alpha", type=float, help="EMA rate")
    sub.add_argument("--window", type=int, help="smoothing window")
    sub.add_argument("--buckets", type=int, help="median-of-means buckets")
    sub.add_argument("--weights", help="w_kl,w_conf,w_ent")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kappa",
        description="Branch-pruned decoding strategies and benchmark harness",
    )
    parser.add_argument("--log-level", default="INFO")
    subs = parser.add_subparsers(dest="command", required=True)

    mk = subs.add_parser("make-tasks", help="generate a synthetic task suite")
    mk.add_argument("--out", required=True)
    mk.add_argument("--n-tasks", type=int, default=10)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--vocab-size", type=int, default=256)
    mk.add_argument("--prompt-len", type=int, default=600)
    mk.add_argument("--separation", type=float, default=4.0)
    mk.add_argument("--noise-scale", type=float, default=0.3)
    mk.add_argument("--n-profiles", type=int, default=128)
    mk.add_argument("--min-len", type=int, default=910)
    mk.add_argument("--max-len", type=int, default=990)

    rn = subs.add_parser("run", help="run one strategy over a task file")
    rn.add_argument("--strategy", required=True, choices=STRATEGIES)
    rn.add_argument("--out-dir", default=".")
    _add_run_flags(rn)

    cp = subs.add_parser("compare", help="run a strategy matrix")
    cp.add_argument("--strategies", default="greedy,bon,stbon_proxy,kappa")
    cp.add_argument("--out", default="report.json")
    _add_run_flags(cp)

    sw = subs.add_parser("sweep", help="hyperparameter grid for kappa")
    sw.add_argument("--alphas", default="0.5")
    sw.add_argument("--windows", default="16")
    sw.add_argument("--bucket-grid", default="4")
    sw.add_argument("--weight-grid", default="0.7,0.2,0.1")
    sw.add_argument("--out", default="sweep.json")
    _add_run_flags(sw)

    pl = subs.add_parser("plot", help="render reduction charts from a report")
    pl.add_argument("--report", required=True)
    pl.add_argument("--out", default="report.png")
    return parser


def cmd_make_tasks(args: argparse.Namespace) -> int:
    tasks = harness.make_planted_tasks(
        args.n_tasks,
        args.seed,
        vocab_size=args.vocab_size,
        prompt_len=args.prompt_len,
        separation=args.separation,
        noise_scale=args.noise_scale,
        n_profiles=args.n_profiles,
        min_len=args.min_len,
        max_len=args.max_len,
    )
    harness.dump_tasks(tasks, args.out)
    log.info("wrote %d tasks to %s", len(tasks), args.out)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    tasks = harness.load_tasks(args.tasks)
    cfg = build_config(args, args.strategy)
    os.makedirs(args.out_dir, exist_ok=True)
    per_task = []
    results = harness.run_suite(tasks, cfg)
    for ti, result in enumerate(results):
        trace_path = os.path.join(args.out_dir, f"trace_{ti:03d}.jsonl")
        with open(trace_path, "w", encoding="utf-8") as fp:
            result.trace.write_jsonl(fp)
        per_task.append({
            "task": ti,
            "accuracy_hit": result.metrics.accuracy_hit,
            "total_tokens": result.metrics.total_tokens,
            "final_branch_tokens": result.metrics.final_branch_tokens,
            "peak_mem_proxy": result.metrics.peak_mem_proxy,
            "final_branch": result.final_branch,
        })
        log.info("task %d: %d tokens in %.3fs", ti,
                 result.metrics.total_tokens, result.metrics.wall_time_s)
    aggregate = harness.aggregate_metrics(results)
    wall = aggregate.pop("wall_time_s_mean")
    metrics = {
        "schema_version": harness.REPORT_SCHEMA_VERSION,
        "strategy": args.strategy,
        "config": cfg.to_dict(),
        "per_task": per_task,
        "aggregate": aggregate,
    }
    metrics_path = os.path.join(args.out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fp:
        json.dump(metrics, fp, sort_keys=True, indent=2)
        fp.write("\n")
    log.info("mean wall time %.3fs; metrics in %s", wall, metrics_path)
    print(json.dumps(aggregate, sort_keys=True))
    return 0


_TABLE_COLUMNS = (
    "strategy", "n_branches", "accuracy", "total_tokens_mean",
    "final_branch_tokens_mean", "peak_mem_proxy_mean",
    "token_reduction_vs_bon", "mem_reduction_vs_bon", "mcost_vs_greedy",
)


def cmd_compare(args: argparse.Namespace) -> int:
    tasks = harness.load_tasks(args.tasks)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    configs = [build_config(args, s) for s in strategies]
    report = harness.compare_strategies(tasks, configs)
    harness.write_report(report, args.out)
    print(harness.format_table(report["rows"], _TABLE_COLUMNS))
    log.info("report written to %s", args.out)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    tasks = harness.load_tasks(args.tasks)
    base_cfg = build_config(args, "kappa")
    report = harness.sweep_hyperparameters(
        tasks,
        base_cfg,
        alphas=_float_list(args.alphas),
        windows=_int_list(args.windows),
        buckets=_int_list(args.bucket_grid),
        weight_triples=_parse_weight_grid(args.weight_grid),
    )
    harness.write_report(report, args.out)
    print(harness.format_table(
        report["rows"],
        ("ema_alpha", "window_w", "mom_buckets_m", "weights", "accuracy",
         "total_tokens_mean", "peak_mem_proxy_mean"),
    ))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = harness.read_report(args.report)
    rows = report["rows"]
    names = [r["strategy"] for r in rows]
    tok = [r.get("token_reduction_vs_bon") for r in rows]
    mem = [r.get("mem_reduction_vs_bon") for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, series, title in (
        (axes[0], tok, "token reduction vs BoN"),
        (axes[1], mem, "peak-memory reduction vs BoN"),
    ):
        vals = [0.0 if v is None else v for v in series]
        ax.bar(names, vals)
        ax.set_title(title)
        ax.set_ylim(0.0, 1.0)
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(args.out)
    log.info("chart written to %s", args.out)
    return 0


_COMMANDS = {
    "make-tasks": cmd_make_tasks,
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ContractViolation, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendFault as exc:
        print(f"backend fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
