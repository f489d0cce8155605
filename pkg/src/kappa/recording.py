"""Run metrics and the per-step trace record schema.

Trace records are plain dicts written as one JSON object per line with
stable key order and full-precision floats, so files diff cleanly and
replaying the scoring pipeline from a trace is exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable

from .errors import ContractViolation


@dataclass
class RunMetrics:
    accuracy_hit: bool | None
    total_tokens: int
    final_branch_tokens: int
    peak_mem_proxy: int
    wall_time_s: float

    def __post_init__(self) -> None:
        if self.final_branch_tokens > self.total_tokens:
            raise ContractViolation("final branch exceeds total token count")

    def deterministic_dict(self) -> dict:
        """All fields except wall time, which is hardware-dependent."""
        d = asdict(self)
        d.pop("wall_time_s")
        return d


@dataclass
class RunTrace:
    """Ordered per-step records plus run-level metadata."""

    meta: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def append(self, record: dict) -> None:
        if self.records and record["t"] <= self.records[-1]["t"]:
            raise ContractViolation("trace timesteps must strictly increase")
        self.records.append(record)

    def count_sampled_tokens(self) -> int:
        return sum(len(r.get("tok", ())) for r in self.records)

    def prune_events(self) -> list[dict]:
        return [r for r in self.records if r.get("pruned")]

    def write_jsonl(self, fp: IO[str]) -> None:
        fp.write(json.dumps({"meta": self.meta}, sort_keys=True) + "\n")
        for rec in self.records:
            fp.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, lines: Iterable[str]) -> "RunTrace":
        trace = cls()
        for i, line in enumerate(lines):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if i == 0 and "meta" in obj:
                trace.meta = obj["meta"]
            else:
                trace.records.append(obj)
        return trace
