"""Attribute inference by cosine similarity between text and candidate embeddings."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Sentence, tokenize
from .embedder import Embedder, EmbedderConfig, Text
from .errors import EmptyReconstruction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttributeTask:
    attribute_name: str
    candidates: tuple[str, ...]
    # (original text, index of the gold candidate)
    instances: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.candidates or len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be unique and non-empty")
        for _, gold in self.instances:
            if not 0 <= gold < len(self.candidates):
                raise ValueError(f"gold index {gold} out of range")

    @classmethod
    def from_json(cls, data: dict) -> "AttributeTask":
        cands = tuple(data["candidates"])
        inst = []
        for item in data["instances"]:
            gold = item["gold"]
            inst.append((item["text"], cands.index(gold) if isinstance(gold, str) else int(gold)))
        return cls(data["attribute_name"], cands, tuple(inst))

    @classmethod
    def load(cls, path: str | Path) -> "AttributeTask":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {"attribute_name": self.attribute_name, "candidates": list(self.candidates),
                "instances": [{"text": t, "gold": g} for t, g in self.instances]}


@dataclass(frozen=True)
class AttributePrediction:
    predicted: int
    scores: tuple[float, ...]
    mode: str


def _embedder(e) -> Embedder:
    return Embedder(e) if isinstance(e, EmbedderConfig) else e


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def _pick(text_vec: np.ndarray, cand_vecs: Sequence[np.ndarray], mode: str) -> AttributePrediction:
    scores = tuple(cosine(text_vec, v) for v in cand_vecs)
    # np.argmax returns the first maximum, i.e. the smallest candidate index
    return AttributePrediction(int(np.argmax(scores)), scores, mode)


def _candidate_vectors(task: AttributeTask, emb: Embedder) -> list[np.ndarray]:
    return [emb.embed(c) for c in task.candidates]


def infer_attribute(reconstructed: Text, task: AttributeTask, proxy_embedder,
                    candidate_vectors: Sequence[np.ndarray] | None = None) -> AttributePrediction:
    """Embed the reconstruction and every candidate with the proxy; pick the nearest."""
    tokens = tokenize(reconstructed) if isinstance(reconstructed, str) else list(reconstructed)
    if not tokens:
        raise EmptyReconstruction("reconstruction is empty")
    emb = _embedder(proxy_embedder)
    cands = candidate_vectors if candidate_vectors is not None else _candidate_vectors(task, emb)
    return _pick(emb.embed(tokens), cands, "reconstructed")


def infer_attribute_direct(original: Sentence | Text, task: AttributeTask, target_embedder,
                           candidate_vectors: Sequence[np.ndarray] | None = None) -> AttributePrediction:
    """Compare the original text with candidates inside the target's own space.

    A guarded target refuses the short candidate strings; the resulting
    ``RefusedShortText`` propagates.
    """
    emb = _embedder(target_embedder)
    text = original.surface if isinstance(original, Sentence) else original
    cands = candidate_vectors if candidate_vectors is not None else _candidate_vectors(task, emb)
    return _pick(emb.embed(text), cands, "direct")


def task_accuracy(task: AttributeTask, predictions: Sequence[AttributePrediction | None]) -> float:
    """Fraction of instances predicted correctly; ``None`` counts as wrong."""
    if len(predictions) != len(task.instances):
        raise ValueError("need exactly one prediction per instance")
    if not predictions:
        return 0.0
    hits = sum(1 for p, (_, gold) in zip(predictions, task.instances) if p is not None and p.predicted == gold)
    return hits / len(predictions)


def predict_reconstructed(reconstructions: Sequence[Text], task: AttributeTask,
                          proxy_embedder) -> list[AttributePrediction | None]:
    """Batch :func:`infer_attribute`; empty reconstructions are logged and scored wrong."""
    emb = _embedder(proxy_embedder)
    cands = _candidate_vectors(task, emb)
    out: list[AttributePrediction | None] = []
    for rec in reconstructions:
        try:
            out.append(infer_attribute(rec, task, emb, cands))
        except EmptyReconstruction:
            log.info("empty reconstruction scored as a miss")
            out.append(None)
    return out
