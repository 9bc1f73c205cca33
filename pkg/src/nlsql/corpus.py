"""Line-delimited corpus and table IO plus corpus validation.

Wire formats (UTF-8, one JSON record per line, unknown fields ignored):

  examples:  {"question": str, "table_id": str,
              "sql": {"sel": int, "agg": int, "conds": [[col, op, value], ...]}}
  tables:    {"id": str, "header": [str, ...], "types": [str, ...],
              "rows": [[cell, ...], ...]}

Condition values may arrive as JSON numbers or strings; both are accepted and
normalized to strings at load — typing is the executor's job.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

from .sketch import (
    AggOp,
    CondOp,
    Condition,
    Example,
    PROV_ORIGINAL,
    SqlSketch,
    Table,
    TableSchema,
    validate_sketch,
)

logger = logging.getLogger(__name__)

COLUMN_TYPES = ("text", "real")


class CorpusFormatError(ValueError):
    """A record failed schema validation in strict mode."""


@dataclass
class Corpus:
    examples: list[Example]
    split: str = "train"  # {train, dev, test}
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def _parse_example(record: dict) -> Example:
    question = record["question"]
    table_id = str(record["table_id"])
    if not isinstance(question, str) or not question.strip():
        raise ValueError("question must be a non-empty string")
    sql = record["sql"]
    sel = int(sql["sel"])
    agg = AggOp(int(sql["agg"]))
    conds = []
    for triple in sql.get("conds", []):
        col, op, value = triple
        conds.append(Condition(int(col), CondOp(int(op)), str(value)))
    sketch = SqlSketch(select_column=sel, agg=agg, conds=tuple(conds))
    return Example(
        question=question,
        table_id=table_id,
        gold=sketch,
        provenance=record.get("provenance", PROV_ORIGINAL),
        style=record.get("style", ""),
    )


def load_examples(path, split: str = "train", strict: bool = True) -> Corpus:
    """Load a line-delimited example file.

    Malformed lines raise (strict) or are skipped with a line-numbered
    warning (lenient). An empty file yields an empty corpus with a warning.
    """
    examples = []
    skipped = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                examples.append(_parse_example(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                if strict:
                    raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
                skipped += 1
                logger.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
    if not examples:
        logger.warning("%s: no examples loaded", path)
    meta = {"skipped_lines": skipped} if skipped else {}
    return Corpus(examples=examples, split=split, meta=meta)


def example_to_record(example: Example) -> dict:
    record = {
        "question": example.question,
        "table_id": example.table_id,
        "sql": {
            "sel": example.gold.select_column,
            "agg": int(example.gold.agg),
            "conds": [[c.column_index, int(c.op), c.value] for c in example.gold.conds],
        },
    }
    if example.provenance != PROV_ORIGINAL:
        record["provenance"] = example.provenance
    if example.style:
        record["style"] = example.style
    return record


def save_examples(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for example in corpus.examples:
            handle.write(json.dumps(example_to_record(example), ensure_ascii=False))
            handle.write("\n")


def _parse_table(record: dict) -> Table:
    table_id = str(record["id"])
    headers = [str(h) for h in record["header"]]
    raw_types = record.get("types") or ["text"] * len(headers)
    types = []
    for t in raw_types:
        if t not in COLUMN_TYPES:
            logger.warning("table %s: unknown column type %r mapped to text", table_id, t)
            t = "text"
        types.append(t)
    schema = TableSchema(table_id=table_id, headers=tuple(headers), types=tuple(types))
    rows = tuple(tuple(str(cell) for cell in row) for row in record.get("rows", []))
    return Table(schema=schema, rows=rows)


def load_tables(path, strict: bool = True) -> dict[str, Table]:
    """Load a line-delimited table file into a table_id -> Table map."""
    tables: dict[str, Table] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                table = _parse_table(json.loads(line))
                if table.table_id in tables:
                    raise ValueError(f"duplicate table_id {table.table_id!r}")
            except (KeyError, TypeError, ValueError) as exc:
                if strict:
                    raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
                logger.warning("%s:%d: skipping malformed table (%s)", path, lineno, exc)
                continue
            tables[table.table_id] = table
    return tables


def table_to_record(table: Table) -> dict:
    return {
        "id": table.table_id,
        "header": list(table.schema.headers),
        "types": list(table.schema.types),
        "rows": [list(row) for row in table.rows],
    }


def save_tables(tables: dict[str, Table], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for table in tables.values():
            handle.write(json.dumps(table_to_record(table), ensure_ascii=False))
            handle.write("\n")


@dataclass
class CorpusReport:
    n_examples: int
    violations: list[tuple[int, str]]  # (example index, description)
    agg_histogram: Counter
    conds_histogram: Counter
    question_length_histogram: Counter

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [
            f"examples: {self.n_examples}",
            f"violations: {len(self.violations)}",
            "agg distribution: "
            + ", ".join(f"{AggOp(k).name}={v}" for k, v in sorted(self.agg_histogram.items())),
            "conds count: "
            + ", ".join(f"{k}={v}" for k, v in sorted(self.conds_histogram.items())),
            "question words: "
            + ", ".join(f"{k}={v}" for k, v in sorted(self.question_length_histogram.items())),
        ]
        for idx, desc in self.violations[:20]:
            lines.append(f"  example {idx}: {desc}")
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more")
        return "\n".join(lines)


def validate_corpus(corpus: Corpus, tables: dict[str, Table]) -> CorpusReport:
    """Per-example sketch validation plus corpus statistics."""
    violations = []
    agg_hist: Counter = Counter()
    conds_hist: Counter = Counter()
    qlen_hist: Counter = Counter()
    for idx, example in enumerate(corpus.examples):
        agg_hist[int(example.gold.agg)] += 1
        conds_hist[len(example.gold.conds)] += 1
        qlen_hist[len(example.question.split())] += 1
        table = tables.get(example.table_id)
        if table is None:
            violations.append((idx, f"dangling table_id {example.table_id!r}"))
            continue
        for desc in validate_sketch(example.gold, table.schema):
            violations.append((idx, desc))
    return CorpusReport(
        n_examples=len(corpus.examples),
        violations=violations,
        agg_histogram=agg_hist,
        conds_histogram=conds_hist,
        question_length_histogram=qlen_hist,
    )
