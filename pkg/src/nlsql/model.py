"""Desk-scale transformer encoder with six sketch-decoding heads.

The encoder is a small pre-norm transformer over token + position + segment
embeddings, trained from scratch in float64. Six heads read the encoded
sequence: select column, aggregation, where-count, where-column (sigmoid per
column), where-operator, and where-value start/end span pointers over the
question positions. Header/column interaction uses column attention: a
pooled header vector attends over question tokens through a learned bilinear
map, one map per head type.

All gradients are hand-derived; the finite-difference suite checks every
parameter block.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import netops as nn
from .serialize import SerializedInput, token_texts
from .sketch import AggOp, CondOp, Condition, SqlSketch, TableSchema
from .vocab import Vocab


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 0  # 0 -> 4 * d_model
    max_positions: int = 512
    max_conds: int = 4
    max_span_len: int = 16
    dropout: float = 0.0
    init_scale: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if min(self.vocab_size, self.d_model, self.n_layers, self.n_heads,
               self.max_positions, self.max_conds, self.max_span_len) < 1:
            raise ValueError("all ModelConfig dimensions must be >= 1")

    @property
    def ffn(self) -> int:
        return self.ffn_dim or 4 * self.d_model


N_AGG = len(AggOp)
N_OPS = len(CondOp)


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    d, f = cfg.d_model, cfg.ffn
    p: dict[str, np.ndarray] = {}

    def w(name, *shape):
        p[name] = rng.normal(0.0, cfg.init_scale, size=shape)

    def zeros(name, *shape):
        p[name] = np.zeros(shape)

    w("tok_emb", cfg.vocab_size, d)
    w("pos_emb", cfg.max_positions, d)
    w("seg_emb", 4, d)
    for i in range(cfg.n_layers):
        pre = f"enc{i}."
        p[pre + "ln1.g"] = np.ones(d)
        zeros(pre + "ln1.b", d)
        for name in ("wq", "wk", "wv", "wo"):
            w(pre + "attn." + name, d, d)
        for name in ("bq", "bk", "bv", "bo"):
            zeros(pre + "attn." + name, d)
        p[pre + "ln2.g"] = np.ones(d)
        zeros(pre + "ln2.b", d)
        w(pre + "ffn.w1", d, f)
        zeros(pre + "ffn.b1", f)
        w(pre + "ffn.w2", f, d)
        zeros(pre + "ffn.b2", d)
    p["ln_f.g"] = np.ones(d)
    zeros("ln_f.b", d)

    for head in ("sel", "wcol"):
        w(f"{head}.att_w", d, d)
        w(f"{head}.u", d, d)
        w(f"{head}.v", d, d)
        zeros(f"{head}.b", d)
        w(f"{head}.w", d)
    w("agg.att_w", d, d)
    w("agg.w1", d, d)
    zeros("agg.b1", d)
    w("agg.w2", d, N_AGG)
    zeros("agg.b2", N_AGG)
    w("wnum.u", d)
    w("wnum.w1", d, d)
    zeros("wnum.b1", d)
    w("wnum.w2", d, cfg.max_conds + 1)
    zeros("wnum.b2", cfg.max_conds + 1)
    w("wop.att_w", d, d)
    w("wop.u", d, d)
    w("wop.v", d, d)
    zeros("wop.b", d)
    w("wop.w2", d, N_OPS)
    zeros("wop.b2", N_OPS)
    for head in ("wvs", "wve"):
        w(f"{head}.u", d, d)
        w(f"{head}.v", d, d)
        zeros(f"{head}.b", d)
        w(f"{head}.w", d)
    return p


# ---------------------------------------------------------------------------
# Features and supervision targets


@dataclass
class Features:
    ids: np.ndarray
    segments: np.ndarray
    question_positions: np.ndarray
    header_positions: list[np.ndarray]
    n_columns: int
    question: str
    question_spans: tuple[tuple[int, int], ...]
    question_tokens: tuple[str, ...]


def prepare_features(serialized: SerializedInput, vocab: Vocab) -> Features:
    ids = np.asarray(vocab.encode(serialized.tokens), dtype=np.int64)
    segments = np.asarray(serialized.segments, dtype=np.int64)
    n_columns = max(serialized.columns, default=-1) + 1
    header_positions = [
        np.asarray(serialized.header_positions(c), dtype=np.int64)
        for c in range(n_columns)
    ]
    qpos = np.asarray(serialized.question_positions, dtype=np.int64)
    question_tokens = tuple(
        serialized.tokens[i] for i in serialized.question_positions
    )
    return Features(
        ids=ids,
        segments=segments,
        question_positions=qpos,
        header_positions=header_positions,
        n_columns=n_columns,
        question=serialized.question,
        question_spans=serialized.question_spans,
        question_tokens=question_tokens,
    )


@dataclass
class Target:
    sel: int
    agg: int
    n_conds: int
    wcol: np.ndarray  # (C,) multi-hot
    conds: list[tuple[int, int, int, int]]  # (col, op, start_tok, end_tok)


def find_span(question_tokens, value: str) -> tuple[tuple[int, int] | None, int]:
    """First contiguous token span matching the value; also how many
    occurrences exist (for ambiguity accounting)."""
    needle = token_texts(value)
    if not needle:
        return None, 0
    hits = []
    limit = len(question_tokens) - len(needle)
    for start in range(limit + 1):
        if list(question_tokens[start:start + len(needle)]) == needle:
            hits.append((start, start + len(needle) - 1))
    return (hits[0] if hits else None), len(hits)


def make_target(gold: SqlSketch, feats: Features,
                max_conds: int) -> tuple[Target | None, bool]:
    """Build the supervision target; None when a gold value has no question
    span (such examples are excluded from training). The flag reports
    whether any value occurred more than once (first occurrence is used)."""
    if len(gold.conds) > max_conds or gold.select_column >= feats.n_columns:
        return None, False
    wcol = np.zeros(feats.n_columns)
    conds = []
    ambiguous = False
    for cond in gold.conds:
        if cond.column_index >= feats.n_columns:
            return None, False
        span, n_hits = find_span(feats.question_tokens, cond.value)
        if span is None:
            return None, False
        ambiguous = ambiguous or n_hits > 1
        wcol[cond.column_index] = 1.0
        conds.append((cond.column_index, int(cond.op), span[0], span[1]))
    return Target(
        sel=gold.select_column,
        agg=int(gold.agg),
        n_conds=len(gold.conds),
        wcol=wcol,
        conds=conds,
    ), ambiguous


# ---------------------------------------------------------------------------
# Encoder


@dataclass
class EncoderOutput:
    hidden: np.ndarray  # (n, d)
    header_vecs: np.ndarray  # (C, d) mean over each column's header tokens
    question_vecs: np.ndarray  # (m, d)
    feats: Features


def encode(feats: Features, params: dict, cfg: ModelConfig,
           dropout_rng: np.random.Generator | None = None):
    """Run the encoder; returns (EncoderOutput, cache for backward)."""
    n = len(feats.ids)
    if n > cfg.max_positions:
        raise ValueError(f"input length {n} exceeds max positions {cfg.max_positions}")
    x = (params["tok_emb"][feats.ids]
         + params["pos_emb"][:n]
         + params["seg_emb"][feats.segments])
    drop_p = cfg.dropout if dropout_rng is not None else 0.0
    masks = []

    def dropout(t):
        if drop_p <= 0.0:
            masks.append(None)
            return t
        mask = (dropout_rng.random(t.shape) >= drop_p) / (1.0 - drop_p)
        masks.append(mask)
        return t * mask

    x = dropout(x)
    layer_caches = []
    for i in range(cfg.n_layers):
        pre = f"enc{i}."
        a_in, ln1_cache = nn.layernorm_fwd(x, params[pre + "ln1.g"], params[pre + "ln1.b"])
        a_out, attn_cache = nn.attention_fwd(
            a_in,
            params[pre + "attn.wq"], params[pre + "attn.bq"],
            params[pre + "attn.wk"], params[pre + "attn.bk"],
            params[pre + "attn.wv"], params[pre + "attn.bv"],
            params[pre + "attn.wo"], params[pre + "attn.bo"],
            cfg.n_heads,
        )
        a_out = dropout(a_out)
        x = x + a_out
        f_in, ln2_cache = nn.layernorm_fwd(x, params[pre + "ln2.g"], params[pre + "ln2.b"])
        h1, lin1_cache = nn.linear_fwd(f_in, params[pre + "ffn.w1"], params[pre + "ffn.b1"])
        h2, gelu_cache = nn.gelu_fwd(h1)
        f_out, lin2_cache = nn.linear_fwd(h2, params[pre + "ffn.w2"], params[pre + "ffn.b2"])
        f_out = dropout(f_out)
        x = x + f_out
        layer_caches.append((ln1_cache, attn_cache, ln2_cache,
                             lin1_cache, gelu_cache, lin2_cache))
    hidden, lnf_cache = nn.layernorm_fwd(x, params["ln_f.g"], params["ln_f.b"])

    header_vecs = np.stack([
        hidden[pos].mean(axis=0) if len(pos) else np.zeros(cfg.d_model)
        for pos in feats.header_positions
    ]) if feats.n_columns else np.zeros((0, cfg.d_model))
    question_vecs = hidden[feats.question_positions]

    enc = EncoderOutput(hidden, header_vecs, question_vecs, feats)
    cache = (feats, layer_caches, lnf_cache, masks)
    return enc, cache


def encode_bwd(dhidden: np.ndarray, params: dict, cfg: ModelConfig, cache,
               grads: dict) -> None:
    """Backprop from d(hidden states) into parameter grads (accumulated)."""
    feats, layer_caches, lnf_cache, masks = cache

    def acc(name, g):
        if name in grads:
            grads[name] += g
        else:
            grads[name] = g

    mask_iter = iter(reversed(masks))

    def undrop(dt):
        mask = next(mask_iter)
        return dt if mask is None else dt * mask

    dx, dg, db = nn.layernorm_bwd(dhidden, lnf_cache)
    acc("ln_f.g", dg)
    acc("ln_f.b", db)
    for i in reversed(range(cfg.n_layers)):
        pre = f"enc{i}."
        ln1_cache, attn_cache, ln2_cache, lin1_cache, gelu_cache, lin2_cache = \
            layer_caches[i]
        df_out = undrop(dx)
        dh2, dw2, db2 = nn.linear_bwd(df_out, lin2_cache)
        acc(pre + "ffn.w2", dw2)
        acc(pre + "ffn.b2", db2)
        dh1 = nn.gelu_bwd(dh2, gelu_cache)
        df_in, dw1, db1 = nn.linear_bwd(dh1, lin1_cache)
        acc(pre + "ffn.w1", dw1)
        acc(pre + "ffn.b1", db1)
        dres, dg2, db2n = nn.layernorm_bwd(df_in, ln2_cache)
        acc(pre + "ln2.g", dg2)
        acc(pre + "ln2.b", db2n)
        dx = dx + dres
        da_out = undrop(dx)
        da_in, attn_grads = nn.attention_bwd(da_out, attn_cache)
        for name, g in attn_grads.items():
            acc(pre + "attn." + name, g)
        dres, dg1, db1n = nn.layernorm_bwd(da_in, ln1_cache)
        acc(pre + "ln1.g", dg1)
        acc(pre + "ln1.b", db1n)
        dx = dx + dres
    dx = undrop(dx)

    n = len(feats.ids)
    dtok = np.zeros_like(params["tok_emb"])
    np.add.at(dtok, feats.ids, dx)
    acc("tok_emb", dtok)
    dpos = np.zeros_like(params["pos_emb"])
    dpos[:n] = dx
    acc("pos_emb", dpos)
    dseg = np.zeros_like(params["seg_emb"])
    np.add.at(dseg, feats.segments, dx)
    acc("seg_emb", dseg)


# ---------------------------------------------------------------------------
# Heads


class AttentionContext(NamedTuple):
    context: np.ndarray
    weights: np.ndarray


def column_attention(header_vec: np.ndarray, question_vecs: np.ndarray,
                     w: np.ndarray) -> AttentionContext:
    """One column's attention over question tokens through a bilinear map.

    scores_i = header_vec . w . q_i; weights = softmax(scores);
    context = sum_i weights_i q_i.
    """
    scores = (header_vec @ w) @ question_vecs.T
    weights = nn.softmax(scores)
    return AttentionContext(weights @ question_vecs, weights)


@dataclass(frozen=True)
class HeadOutputs:
    sel_logits: np.ndarray  # (C,)
    agg_logits: np.ndarray  # (6,)
    wnum_logits: np.ndarray  # (max_conds + 1,)
    wcol_scores: np.ndarray  # (C,) in (0, 1)
    wop_logits: np.ndarray  # (C, 3)
    wval_start_logits: np.ndarray  # (C, m) over question positions only
    wval_end_logits: np.ndarray  # (C, m)
    wcol_logits: np.ndarray  # (C,) pre-sigmoid, kept for the stable loss
    agg_condition_column: int  # column the agg head was conditioned on


def _batched_attention(hc, q, w):
    scores = (hc @ w) @ q.T  # (C, m)
    probs = nn.softmax(scores, axis=-1)
    ctx = probs @ q  # (C, d)
    return ctx, probs


def _scored_mlp(hc, ctx, u, v, b, w):
    t = np.tanh(hc @ u + ctx @ v + b)  # (C, d)
    return t @ w, t


def predict_heads(enc: EncoderOutput, params: dict, cfg: ModelConfig,
                  sel_override: int | None = None):
    """All six head outputs; returns (HeadOutputs, cache).

    The aggregation head conditions on the gold select column when
    ``sel_override`` is given (training) and on the predicted one otherwise.
    Value-span logits exist only over question positions, so header and
    sample tokens can never receive probability mass.
    """
    hc = enc.header_vecs
    q = enc.question_vecs

    sel_ctx, sel_probs = _batched_attention(hc, q, params["sel.att_w"])
    sel_logits, sel_t = _scored_mlp(hc, sel_ctx, params["sel.u"],
                                    params["sel.v"], params["sel.b"],
                                    params["sel.w"])

    sel_idx = int(sel_override) if sel_override is not None \
        else int(np.argmax(sel_logits))
    h_star = hc[sel_idx:sel_idx + 1]
    agg_ctx, agg_probs = _batched_attention(h_star, q, params["agg.att_w"])
    agg_t = np.tanh(agg_ctx @ params["agg.w1"] + params["agg.b1"])
    agg_logits = (agg_t @ params["agg.w2"] + params["agg.b2"])[0]

    pool_scores = q @ params["wnum.u"]
    pool_probs = nn.softmax(pool_scores)
    summary = (pool_probs @ q)[None, :]
    wnum_t = np.tanh(summary @ params["wnum.w1"] + params["wnum.b1"])
    wnum_logits = (wnum_t @ params["wnum.w2"] + params["wnum.b2"])[0]

    wcol_ctx, wcol_probs = _batched_attention(hc, q, params["wcol.att_w"])
    wcol_logits, wcol_t = _scored_mlp(hc, wcol_ctx, params["wcol.u"],
                                      params["wcol.v"], params["wcol.b"],
                                      params["wcol.w"])
    wcol_scores = 1.0 / (1.0 + np.exp(-wcol_logits))

    wop_ctx, wop_probs = _batched_attention(hc, q, params["wop.att_w"])
    wop_t = np.tanh(hc @ params["wop.u"] + wop_ctx @ params["wop.v"]
                    + params["wop.b"])
    wop_logits = wop_t @ params["wop.w2"] + params["wop.b2"]

    def span_head(prefix):
        qu = q @ params[prefix + ".u"]  # (m, d)
        hv = hc @ params[prefix + ".v"]  # (C, d)
        t = np.tanh(qu[None, :, :] + hv[:, None, :] + params[prefix + ".b"])
        return t @ params[prefix + ".w"], t

    wvs_logits, wvs_t = span_head("wvs")
    wve_logits, wve_t = span_head("wve")

    heads = HeadOutputs(
        sel_logits=sel_logits,
        agg_logits=agg_logits,
        wnum_logits=wnum_logits,
        wcol_scores=wcol_scores,
        wop_logits=wop_logits,
        wval_start_logits=wvs_logits,
        wval_end_logits=wve_logits,
        wcol_logits=wcol_logits,
        agg_condition_column=sel_idx,
    )
    cache = {
        "hc": hc, "q": q,
        "sel": (sel_ctx, sel_probs, sel_t),
        "sel_idx": sel_idx,
        "agg": (agg_ctx, agg_probs, agg_t),
        "wnum": (pool_scores, pool_probs, summary, wnum_t),
        "wcol": (wcol_ctx, wcol_probs, wcol_t),
        "wop": (wop_ctx, wop_probs, wop_t),
        "wvs": wvs_t,
        "wve": wve_t,
    }
    return heads, cache


def _attention_bwd(dctx, probs, hc, q, w, dhc, dq, grads, name):
    """Backward through _batched_attention; accumulates into dhc/dq/grads."""
    hw = hc @ w
    dprobs = dctx @ q.T
    dq += probs.T @ dctx
    dscores = nn.softmax_bwd(dprobs, probs, axis=-1)
    dhw = dscores @ q
    dq += dscores.T @ hw
    dhc += dhw @ w.T
    _acc(grads, name, hc.T @ dhw)


def _acc(grads, name, g):
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g


def heads_bwd(dlogits: dict, params: dict, cache: dict, grads: dict):
    """Backward from head-logit gradients; returns d(hidden header vecs) and
    d(question vecs)."""
    hc, q = cache["hc"], cache["q"]
    dhc = np.zeros_like(hc)
    dq = np.zeros_like(q)

    # select head
    dsel = dlogits["sel"]
    sel_ctx, sel_probs, sel_t = cache["sel"]
    dt = np.outer(dsel, params["sel.w"]) * (1.0 - sel_t * sel_t)
    _acc(grads, "sel.w", sel_t.T @ dsel)
    _acc(grads, "sel.b", dt.sum(axis=0))
    _acc(grads, "sel.u", hc.T @ dt)
    dhc += dt @ params["sel.u"].T
    _acc(grads, "sel.v", sel_ctx.T @ dt)
    dctx = dt @ params["sel.v"].T
    _attention_bwd(dctx, sel_probs, hc, q, params["sel.att_w"],
                   dhc, dq, grads, "sel.att_w")

    # aggregation head (conditioned on cached select column)
    dagg = dlogits["agg"]
    agg_ctx, agg_probs, agg_t = cache["agg"]
    sel_idx = cache["sel_idx"]
    _acc(grads, "agg.w2", agg_t.T @ dagg[None, :])
    _acc(grads, "agg.b2", dagg)
    dt = (dagg[None, :] @ params["agg.w2"].T) * (1.0 - agg_t * agg_t)
    _acc(grads, "agg.b1", dt.sum(axis=0))
    _acc(grads, "agg.w1", agg_ctx.T @ dt)
    dctx = dt @ params["agg.w1"].T
    h_star = hc[sel_idx:sel_idx + 1]
    dh_star = np.zeros_like(h_star)
    _attention_bwd(dctx, agg_probs, h_star, q, params["agg.att_w"],
                   dh_star, dq, grads, "agg.att_w")
    dhc[sel_idx] += dh_star[0]

    # where-count head
    dwnum = dlogits["wnum"]
    pool_scores, pool_probs, summary, wnum_t = cache["wnum"]
    _acc(grads, "wnum.w2", wnum_t.T @ dwnum[None, :])
    _acc(grads, "wnum.b2", dwnum)
    dt = (dwnum[None, :] @ params["wnum.w2"].T) * (1.0 - wnum_t * wnum_t)
    _acc(grads, "wnum.b1", dt.sum(axis=0))
    _acc(grads, "wnum.w1", summary.T @ dt)
    dsummary = (dt @ params["wnum.w1"].T)[0]
    dpool = q @ dsummary
    dq += np.outer(pool_probs, dsummary)
    dscores = nn.softmax_bwd(dpool, pool_probs)
    _acc(grads, "wnum.u", q.T @ dscores)
    dq += np.outer(dscores, params["wnum.u"])

    # where-column head
    dwcol = dlogits["wcol"]
    wcol_ctx, wcol_probs, wcol_t = cache["wcol"]
    dt = np.outer(dwcol, params["wcol.w"]) * (1.0 - wcol_t * wcol_t)
    _acc(grads, "wcol.w", wcol_t.T @ dwcol)
    _acc(grads, "wcol.b", dt.sum(axis=0))
    _acc(grads, "wcol.u", hc.T @ dt)
    dhc += dt @ params["wcol.u"].T
    _acc(grads, "wcol.v", wcol_ctx.T @ dt)
    dctx = dt @ params["wcol.v"].T
    _attention_bwd(dctx, wcol_probs, hc, q, params["wcol.att_w"],
                   dhc, dq, grads, "wcol.att_w")

    # where-operator head
    dwop = dlogits["wop"]
    wop_ctx, wop_probs, wop_t = cache["wop"]
    _acc(grads, "wop.w2", wop_t.T @ dwop)
    _acc(grads, "wop.b2", dwop.sum(axis=0))
    dt = (dwop @ params["wop.w2"].T) * (1.0 - wop_t * wop_t)
    _acc(grads, "wop.b", dt.sum(axis=0))
    _acc(grads, "wop.u", hc.T @ dt)
    dhc += dt @ params["wop.u"].T
    _acc(grads, "wop.v", wop_ctx.T @ dt)
    dctx = dt @ params["wop.v"].T
    _attention_bwd(dctx, wop_probs, hc, q, params["wop.att_w"],
                   dhc, dq, grads, "wop.att_w")

    # where-value span heads
    for prefix, key in (("wvs", "wvs"), ("wve", "wve")):
        dspan = dlogits[key]  # (C, m)
        t = cache[key]  # (C, m, d)
        _acc(grads, prefix + ".w", (t * dspan[:, :, None]).sum(axis=(0, 1)))
        dt = dspan[:, :, None] * params[prefix + ".w"] * (1.0 - t * t)
        _acc(grads, prefix + ".b", dt.sum(axis=(0, 1)))
        dqu = dt.sum(axis=0)  # (m, d)
        dhv = dt.sum(axis=1)  # (C, d)
        _acc(grads, prefix + ".u", q.T @ dqu)
        dq += dqu @ params[prefix + ".u"].T
        _acc(grads, prefix + ".v", hc.T @ dhv)
        dhc += dhv @ params[prefix + ".v"].T

    return dhc, dq


# ---------------------------------------------------------------------------
# Loss


def loss_from_heads(heads: HeadOutputs, target: Target):
    """Summed cross-entropy over all six subtasks.

    Returns (loss, per-task breakdown, dlogits dict for backward). The
    where-operator and where-value terms apply per gold where-column only;
    the where-column term is binary cross-entropy over every column.
    """
    breakdown: dict[str, float] = {}
    dlogits: dict[str, np.ndarray] = {}

    sel_loss, dlogits["sel"] = nn.cross_entropy_from_logits(
        heads.sel_logits, target.sel)
    agg_loss, dlogits["agg"] = nn.cross_entropy_from_logits(
        heads.agg_logits, target.agg)
    wnum_loss, dlogits["wnum"] = nn.cross_entropy_from_logits(
        heads.wnum_logits, target.n_conds)
    wcol_loss, dlogits["wcol"] = nn.binary_cross_entropy_from_logits(
        heads.wcol_logits, target.wcol)

    dlogits["wop"] = np.zeros_like(heads.wop_logits)
    dlogits["wvs"] = np.zeros_like(heads.wval_start_logits)
    dlogits["wve"] = np.zeros_like(heads.wval_end_logits)
    wop_loss = 0.0
    wval_loss = 0.0
    for col, op, start, end in target.conds:
        loss_op, d_op = nn.cross_entropy_from_logits(heads.wop_logits[col], op)
        wop_loss += loss_op
        dlogits["wop"][col] += d_op
        loss_s, d_s = nn.cross_entropy_from_logits(
            heads.wval_start_logits[col], start)
        loss_e, d_e = nn.cross_entropy_from_logits(
            heads.wval_end_logits[col], end)
        wval_loss += loss_s + loss_e
        dlogits["wvs"][col] += d_s
        dlogits["wve"][col] += d_e

    breakdown = {
        "sel": float(sel_loss),
        "agg": float(agg_loss),
        "wnum": float(wnum_loss),
        "wcol": float(wcol_loss),
        "wop": float(wop_loss),
        "wval": float(wval_loss),
    }
    return sum(breakdown.values()), breakdown, dlogits


def example_loss(params: dict, cfg: ModelConfig, feats: Features,
                 target: Target) -> float:
    """Forward-only loss; the finite-difference oracle drives this."""
    enc, _ = encode(feats, params, cfg)
    heads, _ = predict_heads(enc, params, cfg, sel_override=target.sel)
    loss, _, _ = loss_from_heads(heads, target)
    return float(loss)


def example_loss_and_grads(params: dict, cfg: ModelConfig, feats: Features,
                           target: Target,
                           dropout_rng: np.random.Generator | None = None):
    """Loss, per-task breakdown, and gradients for one example."""
    enc, enc_cache = encode(feats, params, cfg, dropout_rng=dropout_rng)
    heads, head_cache = predict_heads(enc, params, cfg, sel_override=target.sel)
    loss, breakdown, dlogits = loss_from_heads(heads, target)

    grads: dict[str, np.ndarray] = {}
    dhc, dq = heads_bwd(dlogits, params, head_cache, grads)

    dhidden = np.zeros_like(enc.hidden)
    dhidden[enc.feats.question_positions] += dq
    for col, pos in enumerate(enc.feats.header_positions):
        if len(pos):
            dhidden[pos] += dhc[col] / len(pos)
    encode_bwd(dhidden, params, cfg, enc_cache, grads)
    for name, value in params.items():
        if name not in grads:
            grads[name] = np.zeros_like(value)
    return float(loss), breakdown, grads


# ---------------------------------------------------------------------------
# Decoding


def decode_sketch(heads: HeadOutputs, schema: TableSchema, question: str,
                  question_spans, max_span_len: int = 16) -> SqlSketch:
    """Turn head scores into a sketch.

    select/agg/where-count by argmax; where columns are the top-n sigmoid
    scores with ties going to the lower column index; per chosen column the
    operator is argmax and the value is the (start, end) span maximizing
    start+end logits subject to start <= end < start + max_span_len, read
    back from the original question characters.
    """
    n_columns = len(heads.sel_logits)
    if schema.n_columns != n_columns:
        raise ValueError(
            f"heads cover {n_columns} columns, schema has {schema.n_columns}"
        )
    sel = int(np.argmax(heads.sel_logits))
    agg = AggOp(int(np.argmax(heads.agg_logits)))
    n_conds = int(np.argmax(heads.wnum_logits))
    n_conds = min(n_conds, n_columns)
    m = heads.wval_start_logits.shape[1]
    if m == 0:
        n_conds = 0

    order = sorted(range(n_columns),
                   key=lambda c: (-float(heads.wcol_scores[c]), c))
    conds = []
    for col in sorted(order[:n_conds]):
        op = CondOp(int(np.argmax(heads.wop_logits[col])))
        starts = heads.wval_start_logits[col]
        ends = heads.wval_end_logits[col]
        best, best_span = -np.inf, (0, 0)
        for s in range(m):
            e_hi = min(m, s + max_span_len)
            e_rel = int(np.argmax(ends[s:e_hi]))
            score = starts[s] + ends[s + e_rel]
            if score > best:
                best, best_span = score, (s, s + e_rel)
        start, end = best_span
        value = question[question_spans[start][0]:question_spans[end][1]]
        conds.append(Condition(col, op, value))
    return SqlSketch(select_column=sel, agg=agg, conds=tuple(conds))


# ---------------------------------------------------------------------------
# Checkpoint container

_MAGIC = b"NLSQLCK1"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocab
    params: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    """Write the self-describing container.

    Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header
    {version, config, vocab, extra, tensors: [{name, shape, offset, nbytes}]},
    then tensor payloads as little-endian float64, concatenated in header
    order.
    """
    tensors = []
    offset = 0
    blobs = []
    for name in sorted(checkpoint.params):
        arr = np.ascontiguousarray(checkpoint.params[name], dtype="<f8")
        blob = arr.tobytes()
        tensors.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "<f8",
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(checkpoint.config),
        "vocab": checkpoint.vocab.tokens,
        "extra": checkpoint.extra,
        "tensors": tensors,
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<Q", len(payload)))
        handle.write(payload)
        for blob in blobs:
            handle.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as handle:
        magic = handle.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", handle.read(8))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {header.get('version')!r}"
            )
        params = {}
        payload = handle.read()
    for spec in header["tensors"]:
        start = spec["offset"]
        raw = payload[start:start + spec["nbytes"]]
        params[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(
            spec["shape"]).copy()
    config = ModelConfig(**header["config"])
    return Checkpoint(
        config=config,
        vocab=Vocab(header["vocab"]),
        params=params,
        extra=header.get("extra", {}),
    )
