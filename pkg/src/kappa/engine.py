"""Decoding strategies over a TokenModel.

Four strategies share one stepping core:

* greedy     - argmax decoding of a single branch.
* bon        - N independent branches run to completion, winner by
               negative perplexity.
* stbon_proxy- draft to the cutoff, a fixed buffer window for all
               branches, then keep the branch with the best mean
               log-probability over the buffer. A log-prob stand-in for
               the consistency estimator of self-truncating BoN.
* kappa      - draft, then progressive pruning over a horizon driven by
               KL-gain/confidence/entropy scores, then continuation of
               the lone survivor.

Branch randomness comes from per-branch streams derived from
(seed, branch index), so pruning one branch never perturbs another's
draws. All cross-branch work happens at a per-timestep barrier; results
are independent of how branch steps would be scheduled between barriers.
Token counts and the peak-memory proxy (the maximum concurrent sum of
prompt + generated tokens across resident branches, a KV-cache residency
stand-in) are accounted at that barrier.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .distributions import (
    ENTROPY_EPS,
    SamplerConfig,
    floor_distribution,
)
from .errors import BackendFault, ConfigError, ContractViolation
from .backends.base import TokenModel
from .recording import RunMetrics, RunTrace
from .scheduler import (
    AliveSet,
    PruneSchedule,
    prune_to_target,
    select_final,
    survivor_target,
)
from .signals import (
    SignalConfig,
    SignalState,
    SignalWeights,
    ema_update_and_read,
    instantaneous_score,
    mom_smooth,
    trajectory_score,
    update_kl_delta,
    zscore_normalize,
)

STRATEGIES = ("greedy", "bon", "stbon_proxy", "kappa")


@dataclass(frozen=True)
class RunConfig:
    strategy: str
    n_branches: int = 5
    horizon_tau: int = 40
    c_max: int = 64
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    weights: SignalWeights = field(default_factory=SignalWeights)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.n_branches < 1:
            raise ConfigError("n_branches must be at least 1")
        if self.horizon_tau < 1:
            raise ConfigError("horizon_tau must be at least 1")
        if self.c_max < 1:
            raise ConfigError("c_max must be at least 1")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n_branches": self.n_branches,
            "horizon_tau": self.horizon_tau,
            "c_max": self.c_max,
            "seed": self.seed,
            "sampler": vars(self.sampler).copy(),
            "signal": vars(self.signal).copy(),
            "weights": vars(self.weights).copy(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        sampler = SamplerConfig(**d.pop("sampler", {}))
        signal = SignalConfig(**d.pop("signal", {}))
        weights = SignalWeights(**d.pop("weights", {}))
        return cls(sampler=sampler, signal=signal, weights=weights, **d)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


@dataclass
class Branch:
    index: int
    prompt_len: int
    full: list[int]
    rng: np.random.Generator
    signal: SignalState
    logprob_sum: float = 0.0
    alive: bool = True
    finished: bool = False

    @property
    def tokens(self) -> list[int]:
        """Generated tokens only."""
        return self.full[self.prompt_len:]

    @property
    def gen_len(self) -> int:
        return len(self.full) - self.prompt_len

    def can_step(self, max_new_tokens: int) -> bool:
        return not self.finished and self.gen_len < max_new_tokens


@dataclass
class RunResult:
    final_tokens: list[int]
    final_branch: int
    trace: RunTrace
    metrics: RunMetrics

    def deterministic_view(self) -> dict:
        """Everything reproducible under a fixed seed (drops wall time)."""
        return {
            "final_tokens": list(self.final_tokens),
            "final_branch": self.final_branch,
            "metrics": self.metrics.deterministic_dict(),
            "trace_meta": {k: v for k, v in self.trace.meta.items()},
            "trace": self.trace.records,
        }


def negative_perplexity(branch: Branch) -> float:
    """-exp(-mean token log-probability); higher is better."""
    if branch.gen_len < 1:
        raise ContractViolation("branch has no generated tokens")
    return -math.exp(-branch.logprob_sum / branch.gen_len)


class _Run:
    """Shared stepping core for one decoding run."""

    def __init__(self, backend: TokenModel, prompt: Sequence[int],
                 cfg: RunConfig, n_slots: int):
        cfg.sampler.validate_for_vocab(backend.vocab_size)
        self.backend = backend
        self.cfg = cfg
        self.prompt = [int(t) for t in prompt]
        self.t = 0
        self.total_tokens = 0
        self.peak = n_slots * len(self.prompt)
        self.t0 = time.perf_counter()
        self.branches = [
            Branch(
                index=i,
                prompt_len=len(self.prompt),
                full=list(self.prompt),
                rng=np.random.default_rng([cfg.seed, i]),
                signal=SignalState.fresh(cfg.signal),
            )
            for i in range(n_slots)
        ]
        self.trace = RunTrace(meta={
            "schema_version": 1,
            "config": cfg.to_dict(),
            "prompt_len": len(self.prompt),
            "vocab_size": backend.vocab_size,
            "eos_token_id": backend.eos_token_id,
        })
        self._mask = list(backend.masked_token_ids)

    # -- low-level stepping --------------------------------------------

    def _logits(self, br: Branch) -> np.ndarray:
        logits = np.ascontiguousarray(
            self.backend.next_dist(br.full), dtype=np.float64
        )
        if not np.isfinite(logits).all():
            raise BackendFault(
                f"backend produced non-finite logits for branch {br.index}"
            )
        if logits.size != self.backend.vocab_size:
            raise BackendFault("backend logits have the wrong dimension")
        return logits

    def pre_dist(self, br: Branch) -> np.ndarray:
        """Full temperature-shaped distribution used for signals."""
        return _kernels.softmax_temp(self._logits(br), self.cfg.sampler.temperature)

    def sample_step(self, br: Branch, p_pre: np.ndarray) -> tuple[int, float]:
        """Filter, draw one token, append it, and account for it."""
        if self._mask:
            p_pre = p_pre.copy()
            p_pre[self._mask] = 0.0
        p_f = _kernels.filter_top_k_top_p(
            p_pre, self.cfg.sampler.top_k, self.cfg.sampler.top_p
        )
        tok = _kernels.sample_index(p_f, br.rng.random())
        lp = float(np.log(p_f[tok]))
        self._append(br, tok, lp)
        return tok, lp

    def greedy_step(self, br: Branch) -> tuple[int, float]:
        logits = self._logits(br)
        p_pre = _kernels.softmax_temp(logits, self.cfg.sampler.temperature)
        if self._mask:
            logits = logits.copy()
            logits[self._mask] = -1.0e300
        tok = int(np.argmax(logits))
        lp = float(np.log(p_pre[tok]))
        self._append(br, tok, lp)
        return tok, lp

    def _append(self, br: Branch, tok: int, lp: float) -> None:
        br.full.append(tok)
        br.logprob_sum += lp
        self.total_tokens += 1
        if tok == self.backend.eos_token_id:
            br.finished = True

    def update_peak(self, resident: Sequence[Branch]) -> None:
        size = sum(br.prompt_len + br.gen_len for br in resident)
        if size > self.peak:
            self.peak = size

    def record(self, phase: str, toks: dict, lps: dict,
               alive: Sequence[int], **extra) -> None:
        rec = {
            "t": self.t,
            "phase": phase,
            "alive": [int(i) for i in alive],
            "tok": toks,
            "lp": lps,
        }
        rec.update(extra)
        self.trace.append(rec)

    # -- shared phases ---------------------------------------------------

    def lockstep_sample(self, branches: Sequence[Branch], phase: str,
                        **extra) -> dict:
        """Advance every steppable branch by one token at one barrier."""
        self.t += 1
        max_new = self.cfg.sampler.max_new_tokens
        toks: dict[str, int] = {}
        lps: dict[str, float] = {}
        for br in branches:
            if br.can_step(max_new):
                tok, lp = self.sample_step(br, self.pre_dist(br))
                toks[str(br.index)] = tok
                lps[str(br.index)] = lp
        self.update_peak([br for br in branches if br.alive])
        self.record(phase, toks, lps, [br.index for br in branches if br.alive],
                    **extra)
        return toks

    def draft(self) -> int:
        """Grow all branches in lockstep until every pair of prefixes is
        distinct (or c_max forces the cutoff). Returns the cutoff c."""
        cfg = self.cfg
        max_new = cfg.sampler.max_new_tokens
        while True:
            self.lockstep_sample(self.branches, "draft")
            live = [br for br in self.branches if br.can_step(max_new)]
            seen = set()
            distinct = True
            for br in live:
                key = tuple(br.tokens)
                if key in seen:
                    distinct = False
                    break
                seen.add(key)
            if distinct or self.t >= cfg.c_max:
                return self.t

    def fetch_q(self) -> np.ndarray:
        logits = np.ascontiguousarray(
            self.backend.unconditional_dist(), dtype=np.float64
        )
        if not np.isfinite(logits).all():
            raise BackendFault("backend produced non-finite unconditional logits")
        p = _kernels.softmax_temp(logits, self.cfg.sampler.temperature)
        return floor_distribution(p)

    def continue_branch(self, br: Branch, phase: str = "continue") -> None:
        max_new = self.cfg.sampler.max_new_tokens
        while br.can_step(max_new):
            self.t += 1
            tok, lp = self.sample_step(br, self.pre_dist(br))
            self.update_peak([br])
            self.record(phase, {str(br.index): tok}, {str(br.index): lp},
                        [br.index])

    # -- result assembly --------------------------------------------------

    def finish(self, winner: Branch) -> RunResult:
        metrics = RunMetrics(
            accuracy_hit=None,
            total_tokens=self.total_tokens,
            final_branch_tokens=winner.gen_len,
            peak_mem_proxy=self.peak,
            wall_time_s=time.perf_counter() - self.t0,
        )
        self.trace.meta["final_branch"] = winner.index
        counted = self.trace.count_sampled_tokens()
        if counted != self.total_tokens:
            raise ContractViolation(
                f"trace records {counted} tokens but metrics counted "
                f"{self.total_tokens}"
            )
        if self.peak < winner.prompt_len + winner.gen_len:
            raise ContractViolation("peak proxy below final-sequence residency")
        return RunResult(
            final_tokens=winner.tokens,
            final_branch=winner.index,
            trace=self.trace,
            metrics=metrics,
        )

    def abort(self, fault: BackendFault) -> BackendFault:
        self.trace.meta["aborted"] = True
        fault.partial_trace = self.trace  # type: ignore[attr-defined]
        return fault


def _require(cfg: RunConfig, strategy: str) -> None:
    if cfg.strategy != strategy:
        raise ConfigError(
            f"config is for strategy {cfg.strategy!r}, not {strategy!r}"
        )


def run_greedy(backend: TokenModel, prompt: Sequence[int],
               cfg: RunConfig) -> RunResult:
    _require(cfg, "greedy")
    run = _Run(backend, prompt, cfg, n_slots=1)
    br = run.branches[0]
    try:
        max_new = cfg.sampler.max_new_tokens
        while br.can_step(max_new):
            run.t += 1
            tok, lp = run.greedy_step(br)
            run.update_peak([br])
            run.record("decode", {str(br.index): tok}, {str(br.index): lp},
                       [br.index])
    except BackendFault as fault:
        raise run.abort(fault)
    return run.finish(br)


def run_bon(backend: TokenModel, prompt: Sequence[int],
            cfg: RunConfig) -> RunResult:
    """Full best-of-N: every branch runs to termination; the winner has
    the highest negative perplexity. All branches stay resident until
    selection."""
    _require(cfg, "bon")
    run = _Run(backend, prompt, cfg, n_slots=cfg.n_branches)
    try:
        max_new = cfg.sampler.max_new_tokens
        while any(br.can_step(max_new) for br in run.branches):
            run.lockstep_sample(run.branches, "decode")
    except BackendFault as fault:
        raise run.abort(fault)
    winner = min(run.branches, key=lambda b: (-negative_perplexity(b), b.index))
    run.trace.meta["selection"] = {
        str(b.index): negative_perplexity(b) for b in run.branches
    }
    return run.finish(winner)


def run_stbon_proxy(backend: TokenModel, prompt: Sequence[int],
                    cfg: RunConfig) -> RunResult:
    """Self-truncation proxy: one decision after a fixed buffer window,
    scored by mean log-probability over the buffer tokens."""
    _require(cfg, "stbon_proxy")
    run = _Run(backend, prompt, cfg, n_slots=cfg.n_branches)
    try:
        c = run.draft()
        run.trace.meta["cutoff_c"] = c
        buffer_lp = {br.index: 0.0 for br in run.branches}
        buffer_n = {br.index: 0 for br in run.branches}
        for _ in range(cfg.horizon_tau):
            toks = run.lockstep_sample(run.branches, "buffer")
            for key in toks:
                i = int(key)
                buffer_lp[i] += run.trace.records[-1]["lp"][key]
                buffer_n[i] += 1

        def proxy_score(br: Branch) -> float:
            if buffer_n[br.index]:
                return buffer_lp[br.index] / buffer_n[br.index]
            # branch ended before the buffer; fall back to its overall mean
            return br.logprob_sum / max(br.gen_len, 1)

        scores = {br.index: proxy_score(br) for br in run.branches}
        winner = min(run.branches, key=lambda b: (-scores[b.index], b.index))
        for br in run.branches:
            br.alive = br is winner
        run.t += 1
        run.record(
            "truncate", {}, {}, [winner.index],
            pruned=[{"i": br.index, "score": scores[br.index]}
                    for br in run.branches if br is not winner],
            scores={str(i): s for i, s in scores.items()},
        )
        run.continue_branch(winner)
    except BackendFault as fault:
        raise run.abort(fault)
    return run.finish(winner)


def run_kappa(backend: TokenModel, prompt: Sequence[int],
              cfg: RunConfig) -> RunResult:
    _require(cfg, "kappa")
    run = _Run(backend, prompt, cfg, n_slots=cfg.n_branches)
    try:
        c = run.draft()
        run.trace.meta["cutoff_c"] = c
        q = run.fetch_q()
        schedule = PruneSchedule(cfg.n_branches, c, cfg.horizon_tau)
        alive = AliveSet(tuple(br.index for br in run.branches))
        traj = {br.index: 0.0 for br in run.branches}
        max_new = cfg.sampler.max_new_tokens

        for k in range(1, cfg.horizon_tau + 1):
            sig_t = c + k - 1
            run.t += 1
            members = [run.branches[i] for i in alive]
            active = [br for br in members if br.can_step(max_new)]

            sig: dict[str, dict[str, float]] = {}
            pres: dict[int, np.ndarray] = {}
            for br in active:
                p_pre = run.pre_dist(br)
                d = _kernels.kl_div(p_pre, q)
                d_i = update_kl_delta(br.signal, d)
                d_hat = mom_smooth(list(br.signal.delta_window),
                                   cfg.signal.mom_buckets_m)
                ema = ema_update_and_read(br.signal, d_hat, cfg.signal.ema_alpha)
                conf = _kernels.max_prob(p_pre)
                ent = _kernels.entropy(p_pre, ENTROPY_EPS)
                sig[str(br.index)] = {
                    "D": d, "dI": d_i, "dIh": d_hat,
                    "ema": ema, "C": conf, "H": ent,
                }
                pres[br.index] = p_pre

            zrec: dict[str, dict[str, float]] = {}
            srec: dict[str, float] = {}
            if active:
                bound = cfg.signal.clamp_bound
                ema_z = zscore_normalize(
                    [sig[str(b.index)]["ema"] for b in active], bound)
                conf_z = zscore_normalize(
                    [sig[str(b.index)]["C"] for b in active], bound)
                ent_z = zscore_normalize(
                    [sig[str(b.index)]["H"] for b in active], bound)
                for pos, br in enumerate(active):
                    s = instantaneous_score(
                        ema_z[pos], conf_z[pos], ent_z[pos], cfg.weights)
                    br.signal.score_history.append((sig_t, s))
                    traj[br.index] = trajectory_score(
                        br.signal.score_history, c)
                    zrec[str(br.index)] = {
                        "ema": ema_z[pos], "C": conf_z[pos], "H": ent_z[pos],
                    }
                    srec[str(br.index)] = s

            toks: dict[str, int] = {}
            lps: dict[str, float] = {}
            for br in active:
                tok, lp = run.sample_step(br, pres[br.index])
                toks[str(br.index)] = tok
                lps[str(br.index)] = lp
            run.update_peak(members)

            target = survivor_target(schedule, sig_t)
            survivors = prune_to_target(alive, traj, target)
            pruned = [i for i in alive if i not in survivors]
            for i in pruned:
                run.branches[i].alive = False
            run.record(
                "gate", toks, lps, list(alive),
                sig_t=sig_t, k=k, sig=sig, z=zrec, s=srec,
                S={str(i): traj[i] for i in alive},
                target=target,
                pruned=[{"i": i, "S": traj[i]} for i in pruned],
            )
            alive = survivors

        winner_idx = select_final(alive, traj)
        winner = run.branches[winner_idx]
        run.trace.meta["selection"] = {str(i): traj[i] for i in alive}
        run.continue_branch(winner)
    except BackendFault as fault:
        raise run.abort(fault)
    return run.finish(winner)


_RUNNERS = {
    "greedy": run_greedy,
    "bon": run_bon,
    "stbon_proxy": run_stbon_proxy,
    "kappa": run_kappa,
}


def run(backend: TokenModel, prompt: Sequence[int], cfg: RunConfig) -> RunResult:
    return _RUNNERS[cfg.strategy](backend, prompt, cfg)
