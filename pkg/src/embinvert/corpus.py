"""Sentence segmentation, tokenization, vocabulary building and encoding."""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
N_SPECIAL = len(SPECIAL_TOKENS)

CORPUS_MAGIC = "embinvert-corpus"
CORPUS_VERSION = 1

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "mt", "vs", "no",
        "gen", "col", "lt", "sgt", "capt", "rev", "inc", "ltd", "co", "corp",
        "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
        "nov", "dec", "e.g", "i.e", "cf", "al", "approx", "fig", "eq",
    }
)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_CLOSERS = "\"')]}”’"


@dataclass(frozen=True)
class SegmentationConfig:
    terminals: str = ".!?"
    abbreviations: frozenset = DEFAULT_ABBREVIATIONS
    # a lone capital letter followed by "." is treated as an initial ("J. Smith")
    single_letter_initials: bool = True


def _is_abbreviation(text: str, dot_pos: int, rules: SegmentationConfig) -> bool:
    start = dot_pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:dot_pos].lstrip("\"'([{")
    if not word:
        return False
    if word.lower() in rules.abbreviations:
        return True
    return rules.single_letter_initials and len(word) == 1 and word.isupper()


def segment(raw_text: str, rules: SegmentationConfig | None = None) -> list[str]:
    """Split raw text into sentences at terminal punctuation.

    A terminal mark ends a sentence only when followed by whitespace (or the
    end of input), after skipping any run of terminal marks and closing
    quotes/brackets.  Periods after known abbreviations never split.
    """
    rules = rules or SegmentationConfig()
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(raw_text)
    while i < n:
        ch = raw_text[i]
        if ch in rules.terminals:
            j = i + 1
            while j < n and (raw_text[j] in rules.terminals or raw_text[j] in _CLOSERS):
                j += 1
            at_boundary = j == n or raw_text[j].isspace()
            if at_boundary and not (ch == "." and j == i + 1 and _is_abbreviation(raw_text, i, rules)):
                piece = raw_text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = j
            i = j
            continue
        i += 1
    tail = raw_text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def tokenize(sentence: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        sentence = sentence.lower()
    return _TOKEN_RE.findall(sentence)


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory; ids 0-3 are the reserved specials."""

    id_to_token: tuple[str, ...]
    token_to_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.id_to_token[:N_SPECIAL]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "token_to_id", mapping)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        return cls(SPECIAL_TOKENS + tuple(tokens))

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.size

    @property
    def content_tokens(self) -> tuple[str, ...]:
        return self.id_to_token[N_SPECIAL:]

    @property
    def hash(self) -> str:
        h = hashlib.sha256("\n".join(self.id_to_token).encode("utf-8"))
        return h.hexdigest()[:16]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.content_tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls.from_tokens(lines)


def build_vocab(
    sentences: Iterable[Sequence[str]], max_size: int = 50_000, min_freq: int = 1
) -> Vocabulary:
    """Keep the most frequent tokens (ties broken lexicographically)."""
    if max_size < N_SPECIAL:
        raise ValueError(f"max_size must be >= {N_SPECIAL}")
    counts = Counter(tok for sent in sentences for tok in sent)
    ranked = sorted(
        (tok for tok, c in counts.items() if c >= min_freq and tok not in SPECIAL_TOKENS),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary.from_tokens(ranked[: max_size - N_SPECIAL])


@dataclass(frozen=True)
class Sentence:
    surface: str
    tokens: tuple[int, ...]
    source_tag: str = ""

    def __len__(self) -> int:
        return len(self.tokens)


def filter_and_encode(
    sentences: Iterable[str],
    vocab: Vocabulary,
    min_len: int = 4,
    max_len: int = 64,
    source_tag: str = "",
    lowercase: bool = True,
) -> list[Sentence]:
    out = []
    for surface in sentences:
        toks = tokenize(surface, lowercase=lowercase)
        if min_len <= len(toks) <= max_len:
            out.append(Sentence(surface, tuple(vocab.encode(toks)), source_tag))
    return out


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    avg_len: float
    vocab_coverage: float


def corpus_stats(sentences: Sequence[Sentence]) -> CorpusStats:
    n_tok = sum(len(s.tokens) for s in sentences)
    if not sentences:
        return CorpusStats(0, 0.0, 1.0)
    known = sum(1 for s in sentences for t in s.tokens if t != UNK)
    return CorpusStats(len(sentences), n_tok / len(sentences), known / n_tok if n_tok else 1.0)


def read_text_units(path: str | Path, per_line: bool = True,
                    rules: SegmentationConfig | None = None) -> list[str]:
    """Read sentences: one per non-blank line, or segment the whole document."""
    text = Path(path).read_text(encoding="utf-8")
    if per_line:
        return [line.strip() for line in text.splitlines() if line.strip()]
    return segment(text, rules)


def load_corpus(path: str | Path, vocab: Vocabulary, min_len: int = 4, max_len: int = 64,
                source_tag: str | None = None) -> list[Sentence]:
    path = Path(path)
    tag = path.stem if source_tag is None else source_tag
    return filter_and_encode(read_text_units(path), vocab, min_len, max_len, tag)


def write_encoded(path: str | Path, sentences: Sequence[Sentence], vocab: Vocabulary) -> None:
    header = {"magic": CORPUS_MAGIC, "version": CORPUS_VERSION, "vocab_hash": vocab.hash,
              "count": len(sentences)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in sentences:
            fh.write(json.dumps({"ids": list(s.tokens), "source_tag": s.source_tag,
                                 "surface": s.surface}) + "\n")


def read_encoded(path: str | Path, vocab: Vocabulary | None = None) -> list[Sentence]:
    from .errors import VocabMismatch

    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("magic") != CORPUS_MAGIC or header.get("version") != CORPUS_VERSION:
            raise ValueError(f"{path}: not an encoded corpus file")
        if vocab is not None and header["vocab_hash"] != vocab.hash:
            raise VocabMismatch(f"{path}: encoded with vocab {header['vocab_hash']}")
        out = []
        for line in fh:
            rec = json.loads(line)
            out.append(Sentence(rec.get("surface", ""), tuple(rec["ids"]), rec["source_tag"]))
    return out
