"""Scaling benchmark for the sampling strategies.

Per table size the harness measures setup time and peak memory for index
construction (relevance/em1) and the median per-query latency of the full
query-time content path: sampling plus input serialization. Random-strategy
samples are drawn once offline, so its setup and memory are reported as
negligible (zero) by convention and only the query path is timed.
"""

from __future__ import annotations

import json
import statistics
import time
import tracemalloc
from dataclasses import dataclass, field

from .keyword_index import build_index
from .sampling import (
    SampleSet,
    sample_exact_match_one,
    sample_random,
    sample_relevance,
)
from .serialize import serialize_input, tokenize
from .sketch import Table
from .util import child_rng


@dataclass
class BenchRow:
    table_id: str
    rows: int
    cells: int
    strategy: str
    k: int
    setup_seconds: float
    peak_memory_bytes: int
    per_query_seconds: float | None
    n_queries: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BenchReport:
    strategy: str
    k: int
    rows: list[BenchRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "k": self.k,
            "rows": [r.to_dict() for r in self.rows],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")

    def render_text(self) -> str:
        header = f"{'rows':>10}  {'cells':>10}  {'setup_s':>10}  {'peak_mb':>10}  {'query_ms':>10}"
        lines = [f"strategy {self.strategy}:{self.k}", header]
        for r in self.rows:
            query_ms = "-" if r.per_query_seconds is None \
                else f"{r.per_query_seconds * 1e3:10.3f}"
            lines.append(
                f"{r.rows:>10}  {r.cells:>10}  {r.setup_seconds:>10.3f}  "
                f"{r.peak_memory_bytes / 1e6:>10.1f}  {query_ms:>10}"
            )
        return "\n".join(lines)


def _make_queries(table: Table, n_queries: int, seed: int) -> list[str]:
    """Search-style probe questions mentioning 1-2 real cell values."""
    rng = child_rng("benchq", seed, table.table_id)
    fillers = ("show", "find", "list", "which", "entries", "for", "with")
    queries = []
    for _ in range(n_queries):
        row = rng.choice(table.rows)
        cols = rng.sample(range(table.schema.n_columns), rng.randint(1, 2))
        words = [rng.choice(fillers)]
        for col in cols:
            words.append(row[col])
        words.append(rng.choice(fillers))
        queries.append(" ".join(words))
    return queries


def bench_sampling(tables: list[Table], strategy: str, k: int,
                   n_queries: int = 100, seed: int = 0,
                   budget: int = 512) -> BenchReport:
    """Measure setup cost and median per-query latency over a table ladder."""
    report = BenchReport(strategy=strategy, k=k)
    for table in tables:
        n_cells = len(table.rows) * table.schema.n_columns
        index = None
        if strategy in ("rel", "em1"):
            tracemalloc.start()
            started = time.perf_counter()
            index = build_index(table)
            setup_seconds = time.perf_counter() - started
            _, peak_memory = tracemalloc.get_traced_memory()
            tracemalloc.stop()
        else:
            # Offline sample generation is excluded from serving cost.
            setup_seconds = 0.0
            peak_memory = 0

        fixed_samples: SampleSet | None = None
        if strategy in ("none", "rand"):
            fixed_samples = (
                SampleSet.empty(table.table_id, table.schema.n_columns)
                if strategy == "none"
                else sample_random(table, k, seed)
            )

        per_query = None
        if n_queries > 0:
            timings = []
            for query in _make_queries(table, n_queries, seed):
                t0 = time.perf_counter()
                if strategy == "rel":
                    samples = sample_relevance(table, index, query, k, seed)
                elif strategy == "em1":
                    samples = sample_exact_match_one(table, index, query)
                else:
                    samples = fixed_samples
                serialize_input(tokenize(query), table.schema, samples,
                                budget, question=query)
                timings.append(time.perf_counter() - t0)
            per_query = statistics.median(timings)

        report.rows.append(BenchRow(
            table_id=table.table_id,
            rows=len(table.rows),
            cells=n_cells,
            strategy=strategy,
            k=k,
            setup_seconds=setup_seconds,
            peak_memory_bytes=int(peak_memory),
            per_query_seconds=per_query,
            n_queries=n_queries,
        ))
    return report
