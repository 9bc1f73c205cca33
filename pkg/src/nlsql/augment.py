"""Question synthesis from gold sketches and relational-symbol rewriting.

Synthesis turns a gold sketch into short keyword-style question variants:
the select header lands at the front or the back, each condition shows up as
"value", "header value", or "value header", and condition order is permuted.
Symbol substitution rewrites relational ngrams ("more than", "under", ...)
to their operator symbols, but only when the gold sketch actually contains a
condition with that operator, so the rewrite is meaning-preserving by
construction. Gold sketches are never modified.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from .corpus import Corpus
from .sketch import (
    AggOp,
    CondOp,
    Condition,
    Example,
    PROV_SYMBOL,
    PROV_SYNTHESIZED,
    Table,
    TableSchema,
)
from .util import child_rng, normalize_value

AGG_WORDS = {
    AggOp.COUNT: "number of",
    AggOp.MAX: "highest",
    AggOp.MIN: "lowest",
    AggOp.SUM: "total",
    AggOp.AVG: "average",
}


@dataclass(frozen=True)
class Replacement:
    pattern: str  # lowercase ngram
    op: CondOp
    symbol: str


DEFAULT_REPLACEMENTS: tuple[Replacement, ...] = (
    Replacement("bigger than", CondOp.GT, ">"),
    Replacement("larger than", CondOp.GT, ">"),
    Replacement("more than", CondOp.GT, ">"),
    Replacement("over", CondOp.GT, ">"),
    Replacement("less than", CondOp.LT, "<"),
    Replacement("smaller than", CondOp.LT, "<"),
    Replacement("under", CondOp.LT, "<"),
    Replacement("fewer than", CondOp.LT, "<"),
)


@dataclass(frozen=True)
class ReplacementMap:
    entries: tuple[Replacement, ...] = DEFAULT_REPLACEMENTS

    def __post_init__(self):
        for entry in self.entries:
            if not entry.pattern or entry.pattern != entry.pattern.lower():
                raise ValueError(f"patterns must be lowercase and non-empty: {entry}")
        # Longest patterns win ties during matching.
        ordered = tuple(sorted(self.entries, key=lambda e: -len(e.pattern)))
        object.__setattr__(self, "entries", ordered)

    def patterns_for(self, op: CondOp) -> tuple[str, ...]:
        return tuple(e.pattern for e in self.entries if e.op is op)


def load_replacement_map(path) -> ReplacementMap:
    """Read `pattern <TAB> op <TAB> symbol` lines; op is a symbol or name."""
    entries = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            pattern, op_text, symbol = (p.strip() for p in parts)
            try:
                op = CondOp.from_symbol(op_text)
            except ValueError:
                op = CondOp[op_text.upper()]
            entries.append(Replacement(pattern.lower(), op, symbol))
    return ReplacementMap(tuple(entries))


@dataclass(frozen=True)
class AugmentConfig:
    variants_per_example: int = 8
    include_select_prefix: bool = True
    include_select_suffix: bool = True
    shuffle_conditions: bool = True
    swap_column_value: bool = True
    symbol_substitution_probability: float = 0.5
    mix_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.symbol_substitution_probability <= 1.0:
            raise ValueError("symbol_substitution_probability must be in [0, 1]")
        if not 0.0 <= self.mix_ratio:
            raise ValueError("mix_ratio must be >= 0")
        if self.variants_per_example < 0:
            raise ValueError("variants_per_example must be >= 0")


def _condition_forms(header: str, cond: Condition, config: AugmentConfig,
                     rmap: ReplacementMap) -> list[str]:
    h = header.lower()
    v = normalize_value(cond.value)
    if cond.op is CondOp.EQ:
        forms = [v, f"{h} {v}"]
        if config.swap_column_value:
            forms.append(f"{v} {h}")
        return forms
    # Order conditions keep a relational phrase so the operator survives in
    # the surface form (and gives symbol substitution something to rewrite).
    phrases = rmap.patterns_for(cond.op) or (cond.op.symbol,)
    forms = [f"{h} {phrase} {v}" for phrase in phrases]
    forms += [f"{phrase} {v}" for phrase in phrases]
    return forms


_MAX_ENUMERATION = 4000


def synthesize_short_questions(
    example: Example,
    schema: TableSchema,
    config: AugmentConfig,
    rng: random.Random,
    replacement_map: ReplacementMap | None = None,
) -> list[Example]:
    """Template-expand one example's gold sketch into short question variants.

    The full template space is enumerated (capped), deduplicated, and then
    sampled down to ``variants_per_example``. The gold sketch is carried
    through unchanged with provenance "synthesized".
    """
    if config.variants_per_example == 0:
        return []
    rmap = replacement_map or ReplacementMap()
    gold = example.gold
    sel = schema.headers[gold.select_column].lower()
    if gold.agg is not AggOp.NONE:
        sel = f"{AGG_WORDS[gold.agg]} {sel}"

    positions = []
    if config.include_select_prefix:
        positions.append("prefix")
    if config.include_select_suffix:
        positions.append("suffix")
    if not positions:
        positions = ["prefix"]

    per_cond_forms = [
        _condition_forms(schema.headers[c.column_index], c, config, rmap)
        for c in gold.conds
    ]
    orderings = (
        list(itertools.permutations(range(len(gold.conds))))
        if config.shuffle_conditions
        else [tuple(range(len(gold.conds)))]
    )

    questions: list[str] = []
    seen: set[str] = set()
    for position in positions:
        for order in orderings:
            for combo in itertools.product(*(per_cond_forms[i] for i in order)):
                pieces = list(combo)
                if position == "prefix":
                    pieces.insert(0, sel)
                else:
                    pieces.append(sel)
                question = " ".join(pieces)
                if question not in seen:
                    seen.add(question)
                    questions.append(question)
                if len(questions) >= _MAX_ENUMERATION:
                    break
            if len(questions) >= _MAX_ENUMERATION:
                break
        if len(questions) >= _MAX_ENUMERATION:
            break

    if len(questions) > config.variants_per_example:
        questions = rng.sample(questions, config.variants_per_example)
    return [
        Example(question=q, table_id=example.table_id, gold=gold,
                provenance=PROV_SYNTHESIZED, style="short")
        for q in questions
    ]


def _is_alnum(ch: str) -> bool:
    return ch.isalnum()


def _find_occurrences(question: str, pattern: str) -> list[tuple[int, int]]:
    """Word-boundary-anchored, case-insensitive occurrences of a lowercase
    pattern; pattern spaces match single spaces in the question."""
    lowered = question.lower()
    spans = []
    start = 0
    while True:
        pos = lowered.find(pattern, start)
        if pos < 0:
            break
        end = pos + len(pattern)
        left_ok = pos == 0 or not _is_alnum(lowered[pos - 1])
        right_ok = end == len(lowered) or not _is_alnum(lowered[end])
        if left_ok and right_ok:
            spans.append((pos, end))
        start = pos + 1
    return spans


def substitute_relational_symbols(
    example: Example,
    replacement_map: ReplacementMap,
    rng: random.Random,
    probability: float = 1.0,
) -> Example:
    """Rewrite relational ngrams to operator symbols, gated on the gold ops.

    A pattern is eligible only if the gold sketch has a condition with the
    pattern's operator. Overlapping occurrences resolve longest-first; each
    surviving occurrence is rewritten with the given probability.
    """
    gold_ops = {c.op for c in example.gold.conds}
    candidates: list[tuple[int, int, str]] = []
    for entry in replacement_map.entries:  # longest patterns first
        if entry.op not in gold_ops:
            continue
        for start, end in _find_occurrences(example.question, entry.pattern):
            candidates.append((start, end, entry.symbol))
    if not candidates:
        return example

    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0])))
    selected: list[tuple[int, int, str]] = []
    cursor = -1
    for start, end, symbol in candidates:
        if start > cursor:
            selected.append((start, end, symbol))
            cursor = end - 1

    fired = [span for span in selected if rng.random() < probability]
    if not fired:
        return example
    out = []
    cursor = 0
    for start, end, symbol in fired:
        out.append(example.question[cursor:start])
        out.append(symbol)
        cursor = end
    out.append(example.question[cursor:])
    return Example(
        question="".join(out),
        table_id=example.table_id,
        gold=example.gold,
        provenance=PROV_SYMBOL,
        style=example.style,
    )


def augment_corpus(
    corpus: Corpus,
    tables: dict[str, Table],
    config: AugmentConfig,
    replacement_map: ReplacementMap | None = None,
) -> Corpus:
    """Blend synthesized variants into a corpus at ``mix_ratio``.

    Output = originals plus round(mix_ratio * len(originals)) variants drawn
    from the synthesized pool, shuffled deterministically under the seed.
    """
    rmap = replacement_map or ReplacementMap()
    originals = list(corpus.examples)
    pool: list[Example] = []
    for i, example in enumerate(originals):
        table = tables.get(example.table_id)
        if table is None:
            raise ValueError(f"example {i}: unknown table_id {example.table_id!r}")
        ex_rng = child_rng("augment", config.seed, i)
        for variant in synthesize_short_questions(
            example, table.schema, config, ex_rng, rmap
        ):
            pool.append(substitute_relational_symbols(
                variant, rmap, ex_rng, config.symbol_substitution_probability
            ))

    rng = child_rng("augment", config.seed, "mix")
    rng.shuffle(pool)
    n_add = min(len(pool), round(config.mix_ratio * len(originals)))
    added = pool[:n_add]

    out = originals + added
    rng.shuffle(out)
    stats = {
        "originals": len(originals),
        "added": len(added),
        "pool": len(pool),
        "symbol_substituted": sum(1 for e in added if e.provenance == PROV_SYMBOL),
    }
    meta = dict(corpus.meta)
    meta["augmentation"] = stats
    return Corpus(examples=out, split=corpus.split, meta=meta)
