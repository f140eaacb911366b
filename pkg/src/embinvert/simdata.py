"""Corpus similarity from character 4-gram counts and Spearman rank correlation."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientGrams, ZeroVariance

GRAM = 4
_WS = re.compile(r"\s+")


def normalize(sentence: str) -> str:
    return _WS.sub(" ", sentence.casefold()).strip()


def char_grams(sentence: str, width: int = GRAM) -> Iterable[str]:
    s = normalize(sentence)
    return (s[i:i + width] for i in range(len(s) - width + 1))


def count_grams(corpus: Iterable[str], width: int = GRAM) -> Counter:
    counts: Counter = Counter()
    for sent in corpus:
        counts.update(char_grams(sent, width))
    return counts


@dataclass(frozen=True)
class FeatureSet:
    grams: tuple[str, ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.grams)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"provenance": self.provenance, "k": len(self.grams)}) + "\n"
                              + "".join(json.dumps(g) + "\n" for g in self.grams), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSet":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        head = json.loads(lines[0])
        return cls(tuple(json.loads(x) for x in lines[1:]), head["provenance"])


def build_feature_set(reference_corpus: Iterable[str], k: int = 5000, provenance: str = "") -> FeatureSet:
    """Top-``k`` character 4-grams by frequency (ties broken lexicographically)."""
    counts = count_grams(reference_corpus)
    if len(counts) < k:
        raise InsufficientGrams(f"reference corpus has {len(counts)} distinct 4-grams, need {k}")
    ranked = sorted(counts, key=lambda g: (-counts[g], g))[:k]
    return FeatureSet(tuple(ranked), provenance)


def corpus_feature_vector(corpus: Iterable[str], feature_set: FeatureSet) -> np.ndarray:
    """Overlapping occurrence counts of each feature gram, in feature-set order."""
    counts = count_grams(corpus)
    return np.array([counts.get(g, 0) for g in feature_set.grams], dtype=np.int64)


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError("vectors must have equal length")
    ra, rb = average_ranks(a), average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if den == 0:
        raise ZeroVariance("Spearman correlation is undefined for a constant vector")
    return float(np.clip((ra * rb).sum() / den, -1.0, 1.0))


def dataset_similarity(d1: Iterable[str], d2: Iterable[str], feature_set: FeatureSet) -> float:
    """Spearman correlation between the two corpora's feature count vectors."""
    return spearman(corpus_feature_vector(d1, feature_set), corpus_feature_vector(d2, feature_set))


def similarity_matrix(corpora: Sequence[Sequence[str]], feature_set: FeatureSet) -> np.ndarray:
    vecs = [corpus_feature_vector(c, feature_set) for c in corpora]
    n = len(vecs)
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = spearman(vecs[i], vecs[j])
    return out
