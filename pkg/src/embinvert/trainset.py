"""Attack training data: (embedding + terminator, token sequence) pairs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._container import read_container, write_container
from .corpus import EOS, PAD, Sentence, Vocabulary
from .embedder import Embedder, EmbedderConfig
from .errors import AllRefused, BadFractions, CorruptCheckpoint

log = logging.getLogger(__name__)

TS_MAGIC = b"EMBINVTS"
TS_VERSION = 1


@dataclass(frozen=True, eq=False)
class TrainingPair:
    conditioning: np.ndarray
    target_tokens: tuple[int, ...]
    # the appended end-of-input marker; carries no information for a fixed-size vector
    input_terminated: bool = True

    def __post_init__(self):
        t = self.target_tokens
        if not t or t[-1] != EOS or EOS in t[:-1] or PAD in t:
            raise ValueError("target must be non-empty, end with EOS and contain no other EOS/PAD")

    @property
    def dim(self) -> int:
        return self.conditioning.shape[0]

    def __eq__(self, other):
        return (isinstance(other, TrainingPair) and self.target_tokens == other.target_tokens
                and np.array_equal(self.conditioning, other.conditioning))


@dataclass
class TrainingSet:
    pairs: list[TrainingPair]
    embedder_fingerprint: str
    vocab_hash: str
    dim: int
    n_refused: int = field(default=0, compare=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def subset(self, idx: Sequence[int]) -> "TrainingSet":
        return TrainingSet([self.pairs[i] for i in idx], self.embedder_fingerprint,
                           self.vocab_hash, self.dim)

    def head(self, n: int) -> "TrainingSet":
        return self.subset(range(min(n, len(self.pairs))))

    def save(self, path: str | Path) -> None:
        lengths = [len(p.target_tokens) for p in self.pairs]
        ids = np.array([t for p in self.pairs for t in p.target_tokens], dtype="<i4")
        emb = np.array([p.conditioning for p in self.pairs], dtype="<f8").reshape(len(self.pairs), self.dim)
        header = {"dim": self.dim, "vocab_hash": self.vocab_hash,
                  "embedder_fingerprint": self.embedder_fingerprint,
                  "count": len(self.pairs), "lengths": lengths, "input_terminated": True}
        write_container(path, TS_MAGIC, TS_VERSION, header, emb.tobytes() + ids.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "TrainingSet":
        header, payload = read_container(path, TS_MAGIC, TS_VERSION, CorruptCheckpoint)
        n, dim = header["count"], header["dim"]
        emb = np.frombuffer(payload[: n * dim * 8], dtype="<f8").reshape(n, dim)
        ids = np.frombuffer(payload[n * dim * 8:], dtype="<i4")
        pairs, pos = [], 0
        for i, length in enumerate(header["lengths"]):
            pairs.append(TrainingPair(emb[i].astype(np.float64),
                                      tuple(int(x) for x in ids[pos:pos + length])))
            pos += length
        return cls(pairs, header["embedder_fingerprint"], header["vocab_hash"], dim)


def target_text(sentence: Sentence, vocab: Vocabulary):
    """What the target model is queried with: the original surface when known."""
    return sentence.surface if sentence.surface else vocab.decode(sentence.tokens)


def build_training_set(corpus: Sequence[Sentence], embedder: Embedder | EmbedderConfig,
                       vocab: Vocabulary) -> TrainingSet:
    if isinstance(embedder, EmbedderConfig):
        embedder = Embedder(embedder)
    if not corpus:
        raise ValueError("corpus is empty")
    vecs = embedder.embed_batch([target_text(s, vocab) for s in corpus])
    pairs = [TrainingPair(v, tuple(s.tokens) + (EOS,)) for s, v in zip(corpus, vecs) if v is not None]
    refused = len(corpus) - len(pairs)
    if refused:
        log.info("%d of %d sentences refused by the target embedder", refused, len(corpus))
    if not pairs:
        raise AllRefused("the target embedder refused every sentence")
    return TrainingSet(pairs, embedder.fingerprint, vocab.hash, embedder.dim, refused)


def split(ts: TrainingSet, fractions: Sequence[float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[TrainingSet, TrainingSet, TrainingSet]:
    """Deterministic shuffled split into (train, validation, test)."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise BadFractions(f"fractions must be three non-negative numbers summing to 1: {fractions}")
    n = len(ts)
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(n, int(np.floor(fractions[0] * n + 0.5)))
    n_val = min(n - n_train, int(np.floor(fractions[1] * n + 0.5)))
    return (ts.subset(order[:n_train]), ts.subset(order[n_train:n_train + n_val]),
            ts.subset(order[n_train + n_val:]))
