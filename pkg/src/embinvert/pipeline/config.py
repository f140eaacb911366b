"""Experiment configuration (JSON file <-> dataclass)."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..decoder import TrainConfig
from ..embedder import EmbedderConfig
from ..generate import GenConfig


@dataclass(frozen=True)
class NamedEmbedder:
    label: str
    cfg: EmbedderConfig

    @classmethod
    def from_dict(cls, d: dict) -> "NamedEmbedder":
        d = dict(d)
        label = d.pop("label", None)
        cfg = EmbedderConfig(**d)
        return cls(label or f"{cfg.kind}-d{cfg.dim}", cfg)

    def to_dict(self) -> dict:
        return {"label": self.label, **asdict(self.cfg)}


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    train_corpus: str = ""
    heldout_corpus: Optional[str] = None
    eval_corpora: list = field(default_factory=list)          # [{"name", "path"}]
    few_shot_corpus: Optional[str] = None                     # name in eval_corpora or a path
    length_corpus: Optional[str] = None
    task_files: list = field(default_factory=list)
    vocab_corpora: list = field(default_factory=list)         # default: every corpus above
    vocab_max_size: int = 50_000
    vocab_min_freq: int = 1
    min_len: int = 4
    max_len: int = 64
    target: dict = field(default_factory=lambda: {"kind": "positional_mix", "dim": 64, "seed": 7})
    embedders: list = field(default_factory=list)             # sweep; default [target]
    proxies: list = field(default_factory=list)               # default [target, unguarded]
    hidden_sizes: list = field(default_factory=lambda: [128])
    embed_width: int = 32
    context_window: int = 4
    train_sizes: list = field(default_factory=list)           # default: whole training pool
    eval_size: int = 200
    val_size: int = 200
    train: TrainConfig = field(default_factory=TrainConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    n_trials: int = 10
    few_shot_sizes: list = field(default_factory=lambda: [0, 100, 500])
    length_buckets: list = field(default_factory=lambda: [[8, 12], [20, 28], [40, 56]])
    feature_k: int = 5000
    feature_reference: Optional[str] = None                   # default: train_corpus
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 0                                             # 0: one worker per CPU
    cache: bool = True

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if isinstance(self.gen, dict):
            self.gen = GenConfig.from_dict(self.gen)
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")

    # -- derived views ------------------------------------------------------
    @property
    def workers(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    @property
    def target_embedder(self) -> NamedEmbedder:
        return NamedEmbedder.from_dict(self.target)

    @property
    def embedder_sweep(self) -> list[NamedEmbedder]:
        return [NamedEmbedder.from_dict(e) for e in self.embedders] or [self.target_embedder]

    @property
    def proxy_embedders(self) -> list[NamedEmbedder]:
        if self.proxies:
            return [NamedEmbedder.from_dict(e) for e in self.proxies]
        t = self.target_embedder
        return [NamedEmbedder(t.label, t.cfg.replace(min_query_tokens=0))]

    def all_corpus_paths(self) -> list[str]:
        paths = [self.train_corpus, self.heldout_corpus, self.length_corpus, self.feature_reference]
        paths += [e["path"] for e in self.eval_corpora]
        if self.few_shot_corpus and not any(e["name"] == self.few_shot_corpus for e in self.eval_corpora):
            paths.append(self.few_shot_corpus)
        seen, out = set(), []
        for p in paths:
            if p and p not in seen:
                seen.add(p)
                out.append(p)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        d["gen"] = asdict(self.gen)
        return d

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if base_dir is not None:
            cfg.resolve_paths(Path(base_dir))
        return cfg

    def resolve_paths(self, base: Path) -> None:
        def fix(p):
            if not p:
                return p
            q = Path(p)
            return str(q if q.is_absolute() else (base / q).resolve())

        self.train_corpus = fix(self.train_corpus)
        self.heldout_corpus = fix(self.heldout_corpus)
        self.length_corpus = fix(self.length_corpus)
        self.feature_reference = fix(self.feature_reference)
        self.eval_corpora = [{**e, "path": fix(e["path"])} for e in self.eval_corpora]
        if self.few_shot_corpus and not any(e["name"] == self.few_shot_corpus for e in self.eval_corpora):
            self.few_shot_corpus = fix(self.few_shot_corpus)
        self.task_files = [fix(p) for p in self.task_files]
        self.vocab_corpora = [fix(p) for p in self.vocab_corpora]
        self.out_dir = fix(self.out_dir)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)
