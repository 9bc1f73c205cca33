"""In-memory single-table query engine and execution-accuracy comparator.

Equality conditions compare normalized strings; order comparisons parse both
operands as numbers and fail (with a warning counter) on unparseable cells,
so dirty tables never crash scoring. Numeric aggregations skip unparseable
cells; with no numeric survivors they return an empty result, mirroring SQL
NULL semantics.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .sketch import AggOp, CondOp, SqlSketch, SketchError, Table, validate_sketch
from .util import normalize_value, parse_number

WARN_COMPARISON = "unparseable_numeric_comparison"
WARN_AGGREGATION = "unparseable_aggregation_cell"


@dataclass
class QueryResult:
    """Multiset of selected cell strings, or a single number for aggregations."""

    values: tuple
    warnings: Counter = field(default_factory=Counter)

    @property
    def is_aggregate(self) -> bool:
        return len(self.values) <= 1 and all(
            isinstance(v, (int, float)) for v in self.values
        )


def _row_matches(row, sketch: SqlSketch, warnings: Counter) -> bool:
    for cond in sketch.conds:
        cell = row[cond.column_index]
        if cond.op is CondOp.EQ:
            if normalize_value(cell) != normalize_value(cond.value):
                return False
        else:
            left = parse_number(cell)
            right = parse_number(cond.value)
            if left is None or right is None:
                warnings[WARN_COMPARISON] += 1
                return False
            if cond.op is CondOp.GT and not left > right:
                return False
            if cond.op is CondOp.LT and not left < right:
                return False
    return True


def execute(sketch: SqlSketch, table: Table) -> QueryResult:
    """Run a sketch against a table.

    Rows must satisfy every condition (conjunction). NONE yields the multiset
    of select-column cells; COUNT the surviving row count; MAX/MIN/SUM/AVG
    aggregate the numeric parses of the select column.
    """
    violations = validate_sketch(sketch, table.schema)
    if violations:
        raise SketchError("; ".join(violations))

    warnings: Counter = Counter()
    survivors = [r for r in table.rows if _row_matches(r, sketch, warnings)]
    col = sketch.select_column

    if sketch.agg is AggOp.NONE:
        return QueryResult(tuple(r[col] for r in survivors), warnings)
    if sketch.agg is AggOp.COUNT:
        return QueryResult((len(survivors),), warnings)

    numbers = []
    for r in survivors:
        parsed = parse_number(r[col])
        if parsed is None:
            warnings[WARN_AGGREGATION] += 1
        else:
            numbers.append(parsed)
    if not numbers:
        return QueryResult((), warnings)
    if sketch.agg is AggOp.MAX:
        value = max(numbers)
    elif sketch.agg is AggOp.MIN:
        value = min(numbers)
    elif sketch.agg is AggOp.SUM:
        value = sum(numbers)
    else:  # AVG
        value = sum(numbers) / len(numbers)
    return QueryResult((value,), warnings)


def _canonical(value) -> tuple:
    """Sort/compare key: numeric-looking values coerce to numbers so that
    "2", 2 and 2.0 agree; everything else compares as a normalized string."""
    if isinstance(value, (int, float)):
        return ("num", float(value))
    text = normalize_value(value)
    number = parse_number(text)
    if number is not None:
        return ("num", number)
    return ("str", text)


def results_equal(a: QueryResult, b: QueryResult) -> bool:
    """Multiset equality with 1e-9 relative tolerance on numeric values."""
    if len(a.values) != len(b.values):
        return False
    ka = sorted(_canonical(v) for v in a.values)
    kb = sorted(_canonical(v) for v in b.values)
    for (kind_a, val_a), (kind_b, val_b) in zip(ka, kb):
        if kind_a != kind_b:
            return False
        if kind_a == "num":
            if not math.isclose(val_a, val_b, rel_tol=1e-9, abs_tol=1e-12):
                return False
        elif val_a != val_b:
            return False
    return True


def ex_equal(pred: SqlSketch, gold: SqlSketch, table: Table) -> bool:
    """Execution equality: both sketches produce the same result multiset."""
    return results_equal(execute(pred, table), execute(gold, table))
