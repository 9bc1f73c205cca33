"""Token vocabulary shared by the encoder and the checkpoint format."""

from __future__ import annotations

from collections import Counter

from .serialize import CLS, HEADER_DELIM, SAMPLE_DELIM, SEP, token_texts

PAD = "[PAD]"
UNK = "[UNK]"
SPECIALS = (PAD, UNK, CLS, SEP, HEADER_DELIM, SAMPLE_DELIM)


class Vocab:
    def __init__(self, tokens: list[str]):
        if list(tokens[: len(SPECIALS)]) != list(SPECIALS):
            tokens = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.unk_id = self.index[UNK]

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens) -> list[int]:
        index = self.index
        unk = self.unk_id
        return [index.get(t, unk) for t in tokens]

    @classmethod
    def build(cls, corpus, tables, max_size: int = 30_000) -> "Vocab":
        """Count tokens over questions, headers, and cell values; keep the
        most frequent (ties break lexicographically for determinism)."""
        counts: Counter = Counter()
        for example in corpus.examples:
            counts.update(token_texts(example.question))
        for table in tables.values():
            for header in table.schema.headers:
                counts.update(token_texts(header))
            for row in table.rows:
                for cell in row:
                    counts.update(token_texts(cell))
        for special in SPECIALS:
            counts.pop(special, None)
        budget = max(0, max_size - len(SPECIALS))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:budget]
        return cls(list(SPECIALS) + [t for t, _ in ranked])
