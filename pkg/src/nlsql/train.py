"""Training loop, metric computation, and strategy comparison.

Training runs mini-batch Adam over the summed head losses with optional
gradient clipping and an optional separate learning rate for the encoder
block. Examples whose gold where-value has no span in the question are
dropped from training (and counted); evaluation keeps every example.

Sampling strategies are named none / rand / rel / em1 here and on the CLI;
"rand:k" samples are drawn once per table and shared across questions.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_corpus
from .corpus import Corpus
from .executor import ex_equal
from .keyword_index import build_index
from .model import (
    Checkpoint,
    Features,
    ModelConfig,
    decode_sketch,
    encode,
    example_loss_and_grads,
    init_params,
    make_target,
    predict_heads,
    prepare_features,
)
from .sampling import (
    SampleSet,
    sample_exact_match_one,
    sample_random,
    sample_relevance,
)
from .serialize import BudgetError, serialize_input, tokenize
from .sketch import SqlSketch, Table, lf_equal, render_sql
from .util import child_rng, normalize_value
from .vocab import Vocab

logger = logging.getLogger(__name__)

STRATEGIES = ("none", "rand", "rel", "em1")


def parse_strategy(label: str) -> tuple[str, int]:
    """Parse "rel:3" / "rand:5" / "none" into (strategy, k)."""
    name, _, k_text = label.partition(":")
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}, expected one of {STRATEGIES}")
    k = int(k_text) if k_text else (0 if name == "none" else 3)
    return name, k


class Sampler:
    """Strategy-dispatching sample provider with per-table caching."""

    def __init__(self, tables: dict[str, Table], strategy: str, k: int,
                 seed: int = 0):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.tables = tables
        self.strategy = strategy
        self.k = k
        self.seed = seed
        self._indexes = {}
        self._random_sets = {}

    def index_for(self, table_id: str):
        if table_id not in self._indexes:
            self._indexes[table_id] = build_index(self.tables[table_id])
        return self._indexes[table_id]

    def sample_for(self, table_id: str, question: str) -> SampleSet:
        table = self.tables[table_id]
        if self.strategy == "none":
            return SampleSet.empty(table_id, table.schema.n_columns)
        if self.strategy == "rand":
            if table_id not in self._random_sets:
                self._random_sets[table_id] = sample_random(table, self.k, self.seed)
            return self._random_sets[table_id]
        if self.strategy == "rel":
            return sample_relevance(table, self.index_for(table_id), question,
                                    self.k, self.seed)
        return sample_exact_match_one(table, self.index_for(table_id), question)


def build_features(example, table: Table, sampler: Sampler, vocab: Vocab,
                   budget: int) -> Features:
    samples = sampler.sample_for(example.table_id, example.question)
    serialized = serialize_input(
        tokenize(example.question), table.schema, samples, budget,
        question=example.question,
    )
    return prepare_features(serialized, vocab)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    encoder_lr: float | None = None  # optional separate encoder group rate
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    strategy: str = "rand"
    k: int = 3
    budget: int = 512
    augment: AugmentConfig | None = None
    seed: int = 0
    checkpoint_every: int = 0  # epochs between dev evals/checkpoints; 0 = end only
    vocab_max_size: int = 30_000
    # stop once the epoch-mean loss reaches this value; None trains all epochs.
    # Comparisons between models should share one threshold so nobody trains
    # deep into memorization.
    stop_loss: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr < 0 or (self.encoder_lr is not None and self.encoder_lr < 0):
            raise ValueError("learning rates must be >= 0")


def _is_encoder_param(name: str) -> bool:
    return name.startswith(("tok_emb", "pos_emb", "seg_emb", "enc", "ln_f"))


class AdamState:
    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, cfg: TrainConfig):
        self.t += 1
        bias1 = 1.0 - cfg.beta1 ** self.t
        bias2 = 1.0 - cfg.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = cfg.beta1 * self.m[name] + (1 - cfg.beta1) * g
            self.v[name] = cfg.beta2 * self.v[name] + (1 - cfg.beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            lr = cfg.lr
            if cfg.encoder_lr is not None and _is_encoder_param(name):
                lr = cfg.encoder_lr
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def clip_gradients(grads, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def train(corpus: Corpus, tables: dict[str, Table], config: TrainConfig,
          model_config: ModelConfig | None = None,
          dev_corpus: Corpus | None = None):
    """Train a model; returns (Checkpoint, history).

    ``model_config.vocab_size`` is always replaced with the size of the vocab
    built from the (possibly augmented) corpus and tables. History rows carry
    per-epoch mean loss and task breakdown, plus dev LF/EX at the checkpoint
    cadence and on the final epoch when a dev corpus is given.
    """
    if not corpus.examples:
        raise ValueError("cannot train on an empty corpus")
    if config.augment is not None:
        corpus = augment_corpus(corpus, tables, config.augment)

    vocab = Vocab.build(corpus, tables, max_size=config.vocab_max_size)
    if model_config is None:
        model_config = ModelConfig(vocab_size=len(vocab), seed=config.seed)
    else:
        model_config = dataclasses.replace(model_config, vocab_size=len(vocab))

    sampler = Sampler(tables, config.strategy, config.k, config.seed)
    counters: Counter = Counter()
    prepared = []
    for i, example in enumerate(corpus.examples):
        table = tables.get(example.table_id)
        if table is None:
            raise ValueError(f"example {i}: unknown table {example.table_id!r}")
        try:
            feats = build_features(example, table, sampler, vocab, config.budget)
        except BudgetError:
            counters["over_budget"] += 1
            continue
        target, ambiguous = make_target(example.gold, feats, model_config.max_conds)
        if target is None:
            counters["unalignable"] += 1
            continue
        if ambiguous:
            counters["ambiguous_value_span"] += 1
        prepared.append((feats, target))
    if not prepared:
        raise ValueError("no trainable examples after alignment filtering")
    counters["trainable"] = len(prepared)

    params = init_params(model_config)
    adam = AdamState(params)
    history: list[dict] = []
    dropout_rng = (
        np.random.default_rng(model_config.seed + 1)
        if model_config.dropout > 0 else None
    )

    for epoch in range(config.epochs):
        order = list(range(len(prepared)))
        child_rng("train", config.seed, "epoch", epoch).shuffle(order)
        epoch_loss = 0.0
        epoch_breakdown: Counter = Counter()
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            grads_sum: dict[str, np.ndarray] = {}
            for idx in batch:
                feats, target = prepared[idx]
                loss, breakdown, grads = example_loss_and_grads(
                    params, model_config, feats, target, dropout_rng=dropout_rng
                )
                epoch_loss += loss
                epoch_breakdown.update(breakdown)
                for name, g in grads.items():
                    if name in grads_sum:
                        grads_sum[name] += g
                    else:
                        grads_sum[name] = g
            for g in grads_sum.values():
                g /= len(batch)
            clip_gradients(grads_sum, config.clip_norm)
            adam.step(params, grads_sum, config)

        row = {"epoch": epoch, "loss": epoch_loss / len(prepared)}
        row.update({
            f"loss_{k}": v / len(prepared) for k, v in sorted(epoch_breakdown.items())
        })
        cadence = config.checkpoint_every
        is_last = epoch == config.epochs - 1
        if dev_corpus is not None and (is_last or (cadence and (epoch + 1) % cadence == 0)):
            ckpt = Checkpoint(model_config, vocab, params,
                              extra={"epoch": epoch})
            report = evaluate(ckpt, dev_corpus, tables, config.strategy,
                              config.k, budget=config.budget, seed=config.seed)
            row["dev_lf"] = report.lf_accuracy
            row["dev_ex"] = report.ex_accuracy
        history.append(row)
        logger.info("epoch %d: loss %.4f", epoch, row["loss"])
        if config.stop_loss is not None and row["loss"] <= config.stop_loss:
            break

    checkpoint = Checkpoint(
        config=model_config,
        vocab=vocab,
        params=params,
        extra={
            "train_config": dataclasses.asdict(config),
            "counters": dict(counters),
        },
    )
    return checkpoint, history


# ---------------------------------------------------------------------------
# Evaluation

SUBTASKS = ("sel", "agg", "wnum", "wcol", "wop", "wval")


@dataclass
class EvalReport:
    n: int
    lf_accuracy: float
    ex_accuracy: float
    subtask_accuracy: dict[str, float]
    counts: dict[str, int]
    predictions: list[dict] = field(default_factory=list)

    @property
    def errors(self) -> list[dict]:
        return [p for p in self.predictions if not p["lf"]]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lf": self.lf_accuracy,
            "ex": self.ex_accuracy,
            "subtasks": self.subtask_accuracy,
            "counts": self.counts,
        }

    def render_text(self) -> str:
        parts = [f"n={self.n}", f"LF={self.lf_accuracy:.3f}",
                 f"EX={self.ex_accuracy:.3f}"]
        parts += [f"{k}={v:.3f}" for k, v in self.subtask_accuracy.items()]
        return "  ".join(parts)


def _subtask_match(pred: SqlSketch, gold: SqlSketch) -> dict[str, bool]:
    return {
        "sel": pred.select_column == gold.select_column,
        "agg": pred.agg == gold.agg,
        "wnum": len(pred.conds) == len(gold.conds),
        "wcol": {c.column_index for c in pred.conds}
                == {c.column_index for c in gold.conds},
        "wop": Counter((c.column_index, int(c.op)) for c in pred.conds)
               == Counter((c.column_index, int(c.op)) for c in gold.conds),
        "wval": Counter((c.column_index, normalize_value(c.value)) for c in pred.conds)
                == Counter((c.column_index, normalize_value(c.value)) for c in gold.conds),
    }


def evaluate(checkpoint: Checkpoint, corpus: Corpus, tables: dict[str, Table],
             strategy: str, k: int, budget: int = 512, seed: int = 0,
             predictor=None) -> EvalReport:
    """Sample, serialize, encode, decode, and score every example.

    ``predictor(example, table) -> SqlSketch`` overrides the model path (used
    by oracle tests). Per-example LF implies EX by the executor's contract;
    a violation would indicate an engine bug and raises immediately.
    """
    if not corpus.examples:
        raise ValueError("cannot evaluate an empty corpus")
    sampler = Sampler(tables, strategy, k, seed)
    cfg = checkpoint.config
    counts: Counter = Counter()
    lf_hits = 0
    ex_hits = 0
    subtask_hits: Counter = Counter()
    predictions = []
    for i, example in enumerate(corpus.examples):
        table = tables.get(example.table_id)
        if table is None:
            raise ValueError(f"example {i}: unknown table {example.table_id!r}")
        if predictor is not None:
            pred = predictor(example, table)
        else:
            try:
                feats = build_features(example, table, sampler,
                                       checkpoint.vocab, budget)
            except BudgetError:
                counts["over_budget"] += 1
                pred = SqlSketch(select_column=0)
            else:
                enc, _ = encode(feats, checkpoint.params, cfg)
                heads, _ = predict_heads(enc, checkpoint.params, cfg)
                pred = decode_sketch(heads, table.schema, feats.question,
                                     feats.question_spans, cfg.max_span_len)
        lf = lf_equal(pred, example.gold)
        ex = ex_equal(pred, example.gold, table)
        if lf and not ex:
            raise AssertionError(
                f"example {i}: logical match without execution match"
            )
        lf_hits += lf
        ex_hits += ex
        for name, hit in _subtask_match(pred, example.gold).items():
            subtask_hits[name] += hit
        predictions.append({
            "index": i,
            "question": example.question,
            "table_id": example.table_id,
            "pred_sql": render_sql(pred, table.schema),
            "gold_sql": render_sql(example.gold, table.schema),
            "lf": bool(lf),
            "ex": bool(ex),
        })
    n = len(corpus.examples)
    return EvalReport(
        n=n,
        lf_accuracy=lf_hits / n,
        ex_accuracy=ex_hits / n,
        subtask_accuracy={name: subtask_hits[name] / n for name in SUBTASKS},
        counts=dict(counts),
        predictions=predictions,
    )


def save_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2)
        handle.write("\n")


def save_predictions(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in report.predictions:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Strategy comparison


@dataclass
class Comparison:
    rows: list[dict]

    def render_text(self) -> str:
        columns = ["strategy", "n", "lf", "ex"] + list(SUBTASKS)
        widths = {c: max(len(c), 8) for c in columns}
        lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
        for row in self.rows:
            cells = []
            for c in columns:
                value = row[c]
                text = f"{value:.3f}" if isinstance(value, float) else str(value)
                cells.append(text.ljust(widths[c]))
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"rows": self.rows}


def compare_strategies(checkpoints, corpus: Corpus, tables: dict[str, Table],
                       strategies, budget: int = 512, seed: int = 0) -> Comparison:
    """Evaluate one checkpoint per strategy (or one shared checkpoint).

    ``strategies`` is a list of labels like "none", "rand:3", "rel:3";
    ``checkpoints`` is a single Checkpoint or a {label: Checkpoint} map.
    """
    rows = []
    for label in strategies:
        strategy, k = parse_strategy(label)
        ckpt = checkpoints[label] if isinstance(checkpoints, dict) else checkpoints
        report = evaluate(ckpt, corpus, tables, strategy, k,
                          budget=budget, seed=seed)
        row = {"strategy": label, "n": report.n, "lf": report.lf_accuracy,
               "ex": report.ex_accuracy}
        row.update(report.subtask_accuracy)
        rows.append(row)
    return Comparison(rows)
