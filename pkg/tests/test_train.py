import numpy as np
import pytest

from nlsql.corpus import Corpus
from nlsql.model import ModelConfig
from nlsql.synth import SynthConfig, generate_synthetic_corpus
from nlsql.train import (
    Sampler,
    TrainConfig,
    compare_strategies,
    evaluate,
    parse_strategy,
    train,
)


@pytest.fixture(scope="module")
def tiny_setup():
    config = SynthConfig(n_tables=3, rows_per_table=5, questions_per_table=4,
                         seed=2)
    corpus, tables = generate_synthetic_corpus(config)
    return corpus, tables


MODEL = ModelConfig(vocab_size=1, d_model=16, n_layers=1, n_heads=2, seed=0)


def test_parse_strategy():
    assert parse_strategy("rel:3") == ("rel", 3)
    assert parse_strategy("none") == ("none", 0)
    assert parse_strategy("rand") == ("rand", 3)
    with pytest.raises(ValueError):
        parse_strategy("magic:1")


def test_zero_learning_rate_freezes_parameters(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=3, batch_size=8, lr=0.0, strategy="none", k=0,
                         seed=1)
    ckpt, history = train(corpus, tables, config, model_config=MODEL)
    from nlsql.model import init_params
    fresh = init_params(ckpt.config)
    for name, value in ckpt.params.items():
        assert np.array_equal(value, fresh[name])
    losses = [round(row["loss"], 12) for row in history]
    assert len(set(losses)) == 1


def test_same_seed_reproduces_first_epoch_loss(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=1, batch_size=8, strategy="rand", k=2, seed=3)
    _, first = train(corpus, tables, config, model_config=MODEL)
    _, second = train(corpus, tables, config, model_config=MODEL)
    assert first[0]["loss"] == second[0]["loss"]


def test_stop_loss_halts_training_early(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=50, batch_size=8, strategy="none", k=0,
                         seed=1, stop_loss=100.0)
    _, history = train(corpus, tables, config, model_config=MODEL)
    assert len(history) == 1  # first epoch already under the huge threshold


def test_train_rejects_empty_corpus(tiny_setup):
    _, tables = tiny_setup
    with pytest.raises(ValueError, match="empty"):
        train(Corpus([]), tables, TrainConfig(epochs=1), model_config=MODEL)


def test_gold_predictor_scores_perfectly(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=1, batch_size=8, strategy="none", k=0, seed=0)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    report = evaluate(ckpt, corpus, tables, "none", 0,
                      predictor=lambda example, table: example.gold)
    assert report.lf_accuracy == 1.0
    assert report.ex_accuracy == 1.0
    assert all(v == 1.0 for v in report.subtask_accuracy.values())


def test_evaluate_rejects_empty_corpus(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=1, batch_size=8, strategy="none", k=0, seed=0)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    with pytest.raises(ValueError, match="empty"):
        evaluate(ckpt, Corpus([]), tables, "none", 0)


def test_evaluate_is_deterministic(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=2, batch_size=8, strategy="rand", k=2, seed=5)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    first = evaluate(ckpt, corpus, tables, "rand", 2, seed=5)
    second = evaluate(ckpt, corpus, tables, "rand", 2, seed=5)
    assert first.to_dict() == second.to_dict()
    assert first.predictions == second.predictions


def test_lf_implies_ex_in_reports(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=2, batch_size=8, strategy="rel", k=2, seed=5)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    report = evaluate(ckpt, corpus, tables, "rel", 2, seed=5)
    for record in report.predictions:
        assert record["ex"] or not record["lf"]


def test_report_metrics_match_prediction_dump(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=2, batch_size=8, strategy="rand", k=2, seed=5)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    report = evaluate(ckpt, corpus, tables, "rand", 2, seed=5)
    assert report.lf_accuracy == sum(p["lf"] for p in report.predictions) / report.n
    assert report.ex_accuracy == sum(p["ex"] for p in report.predictions) / report.n


def test_compare_strategies_rows(tiny_setup):
    corpus, tables = tiny_setup
    config = TrainConfig(epochs=1, batch_size=8, strategy="rand", k=2, seed=0)
    ckpt, _ = train(corpus, tables, config, model_config=MODEL)
    comparison = compare_strategies(ckpt, corpus, tables,
                                    ["none", "rand:2", "rel:2"])
    assert [row["strategy"] for row in comparison.rows] \
        == ["none", "rand:2", "rel:2"]
    single = compare_strategies(ckpt, corpus, tables, ["rand:2"])
    assert len(single.rows) == 1
    again = compare_strategies(ckpt, corpus, tables, ["rand:2"])
    assert single.rows == again.rows
    text = comparison.render_text()
    assert "strategy" in text and "rel:2" in text


def test_sampler_none_strategy_yields_empty_columns(tiny_setup):
    _, tables = tiny_setup
    table_id = next(iter(tables))
    sampler = Sampler(tables, "none", 0)
    samples = sampler.sample_for(table_id, "whatever")
    assert all(column == () for column in samples.columns)


def test_training_drops_unalignable_examples(tiny_setup):
    corpus, tables = tiny_setup
    from nlsql.sketch import AggOp, CondOp, Condition, Example, SqlSketch
    table_id = next(iter(tables))
    bad = Example("question without the value", table_id,
                  SqlSketch(0, AggOp.NONE,
                            (Condition(0, CondOp.EQ, "zzz missing"),)))
    mixed = Corpus(corpus.examples + [bad])
    config = TrainConfig(epochs=1, batch_size=8, strategy="none", k=0, seed=0)
    ckpt, _ = train(mixed, tables, config, model_config=MODEL)
    assert ckpt.extra["counters"]["unalignable"] == 1
