import random

import pytest
from hypothesis import given, settings, strategies as st

from nlsql.sampling import SampleSet, sample_random
from nlsql.serialize import (
    BudgetError,
    SEG_HEADER,
    SEG_QUESTION,
    SEG_SAMPLE,
    SEG_SEPARATOR,
    serialize_input,
    token_texts,
    tokenize,
)
from nlsql.sketch import TableSchema


def test_tokenize_spans_recover_text():
    text = "Grid of BMW rider with > 200 laps?"
    for token in tokenize(text):
        assert text[token.start:token.end].lower() == token.text


def test_tokenize_keeps_decimals_whole():
    assert token_texts("pace 3.5 laps") == ["pace", "3.5", "laps"]


def test_serialize_motogp_layout(motogp_table):
    samples = SampleSet(
        table_id=motogp_table.table_id, strategy="random", k=3,
        columns=(
            ("Nicolas Terol", "Mike Di Meglio", "Stevie Bonsey"),
            ("Derbi", "Honda", "KTM"),
            ("1", "24", "0"),
            ("20", "29", "25"),
        ),
    )
    question = "grid of bmw rider with > 200 laps"
    serialized = serialize_input(tokenize(question), motogp_table.schema,
                                 samples, budget=64, question=question)
    assert serialized.render() == (
        "[CLS] grid of bmw rider with > 200 laps [SEP] "
        "rider || nicolas terol | mike di meglio | stevie bonsey [SEP] "
        "manufacturer || derbi | honda | ktm [SEP] "
        "laps || 1 | 24 | 0 [SEP] "
        "grid || 20 | 29 | 25 [SEP]"
    )


def test_serialize_without_samples(motogp_table):
    question = "grid of bmw"
    serialized = serialize_input(tokenize(question), motogp_table.schema,
                                 None, budget=32, question=question)
    assert serialized.render() == (
        "[CLS] grid of bmw [SEP] rider [SEP] manufacturer [SEP] "
        "laps [SEP] grid [SEP]"
    )


def test_budget_error_when_headers_do_not_fit(motogp_table):
    with pytest.raises(BudgetError):
        serialize_input(tokenize("grid of bmw"), motogp_table.schema, None,
                        budget=8)


def test_truncation_drops_widest_column_last_sample_first(motogp_table):
    samples = SampleSet(
        table_id=motogp_table.table_id, strategy="random", k=3,
        columns=(
            ("Nicolas Terol", "Mike Di Meglio"),  # 4 sample tokens
            ("Derbi",),
            ("1", "24"),
            (),
        ),
    )
    question = "grid of bmw"
    full = serialize_input(tokenize(question), motogp_table.schema, samples,
                           budget=64, question=question)
    assert len(full) == 26
    # budget 21 forces two drops: "Mike Di Meglio" (widest column's last
    # sample), then the width tie between Rider and Laps goes to the lower
    # index, so "Nicolas Terol" goes next and Rider loses its sample block.
    trimmed = serialize_input(tokenize(question), motogp_table.schema,
                              samples, budget=21, question=question)
    assert trimmed.render() == (
        "[CLS] grid of bmw [SEP] rider [SEP] "
        "manufacturer || derbi [SEP] laps || 1 | 24 [SEP] grid [SEP]"
    )
    assert len(trimmed) <= 21
    # question and headers always survive
    assert [t for t, s in zip(trimmed.tokens, trimmed.segments)
            if s == SEG_QUESTION] == ["grid", "of", "bmw"]
    assert [t for t, s in zip(trimmed.tokens, trimmed.segments)
            if s == SEG_HEADER] \
        == ["rider", "manufacturer", "laps", "grid"]


def test_segment_and_column_labels(tennis_table):
    samples = sample_random(tennis_table, 1, seed=0)
    question = "who won?"
    serialized = serialize_input(tokenize(question), tennis_table.schema,
                                 samples, budget=64, question=question)
    assert serialized.segments[0] == SEG_SEPARATOR
    assert serialized.columns[0] == -1
    for seg, col, token in zip(serialized.segments, serialized.columns,
                               serialized.tokens):
        if seg in (SEG_HEADER, SEG_SAMPLE):
            assert col >= 0
        if seg == SEG_QUESTION:
            assert col == -1
    assert serialized.question_spans == ((0, 3), (4, 7), (7, 8))


# Round-trip property ---------------------------------------------------------

HEADER_WORDS = ["Result", "Court", "Player Name", "No.(s)", "Laps"]
CELL_WORDS = ["winner", "Rafael Nadal", "200", "runner-up", "x 1", "KTM"]


@given(st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_round_trip_recovers_headers_and_samples(seed):
    rng = random.Random(seed)
    n_cols = rng.randint(1, 4)
    headers = tuple(rng.choice(HEADER_WORDS) for _ in range(n_cols))
    schema = TableSchema("t", headers, ("text",) * n_cols)
    columns = tuple(
        tuple(rng.choice(CELL_WORDS) for _ in range(rng.randint(0, 3)))
        for _ in range(n_cols)
    )
    samples = SampleSet("t", "random", 3, columns)
    question = " ".join(rng.choice(CELL_WORDS) for _ in range(rng.randint(1, 5)))
    serialized = serialize_input(tokenize(question), schema, samples,
                                 budget=512, question=question)
    assert len(serialized) <= 512
    recovered = serialized.recover_columns()
    assert len(recovered) == n_cols
    for col in range(n_cols):
        header_tokens, sample_lists = recovered[col]
        assert header_tokens == token_texts(headers[col])
        assert sample_lists == [token_texts(c) for c in columns[col]]
