"""End-to-end experiments: in-distribution, OOD, few-shot, text length, attributes.

Every number is a pure function of (config, corpora, master seed):

* decoders are initialised and shuffled with seeds derived from the master
  seed and the cell's factors;
* sampled decodes of trial ``t`` on dataset ``D`` use the generator seeded by
  ``derive_seed(master, "eval", D, t)``, so the same model evaluated on the
  same data gives the same numbers in every experiment;
* cells may run on a thread pool, but rows are assembled in a fixed order.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..attribute import AttributeTask, infer_attribute_direct, predict_reconstructed, task_accuracy
from ..corpus import Sentence, Vocabulary, build_vocab, filter_and_encode, read_text_units, tokenize
from ..decoder import DecoderParams, continue_training, init_params, load_checkpoint, save_checkpoint, train
from ..embedder import Embedder, EmbeddingCache
from ..errors import EmptyBucket
from ..generate import GenConfig, beam_decode, sample_decode
from ..metrics import TrialStats, aggregate_trials, bleu1, corpus_score, rouge1
from ..simdata import FeatureSet, build_feature_set, dataset_similarity
from ..trainset import TrainingSet, build_training_set
from .config import ExperimentConfig, NamedEmbedder
from .report import ReportRow, emit_report, mark_significance

log = logging.getLogger(__name__)

EXPERIMENTS = ("in_distribution", "ood", "few_shot", "length", "attribute")


def derive_seed(*parts) -> int:
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little") >> 1


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


class Workspace:
    """Shared state for one run: vocabulary, corpora, embedders, trained decoders."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        for p in cfg.all_corpus_paths() + list(cfg.task_files):
            if not Path(p).exists():
                raise FileNotFoundError(f"configured path does not exist: {p}")
        vocab_paths = cfg.vocab_corpora or cfg.all_corpus_paths()
        texts = [tokenize(s) for p in vocab_paths for s in read_text_units(p)]
        self.vocab: Vocabulary = build_vocab(texts, cfg.vocab_max_size, cfg.vocab_min_freq)
        self.cache = EmbeddingCache(self.out / "cache" / "embeddings.json") if cfg.cache else None
        self._texts: dict[str, list[str]] = {}
        self._split = None
        self._decoders: dict[Path, DecoderParams] = {}
        self._locks: dict[Path, threading.Lock] = {}
        self._guard = threading.Lock()

    # -- data -------------------------------------------------------------------
    def texts(self, path: str) -> list[str]:
        if path not in self._texts:
            self._texts[path] = read_text_units(path)
        return self._texts[path]

    def sentences(self, path: str, tag: Optional[str] = None) -> list[Sentence]:
        tag = tag or Path(path).stem
        return filter_and_encode(self.texts(path), self.vocab, self.cfg.min_len, self.cfg.max_len, tag)

    def embedder(self, named: NamedEmbedder) -> Embedder:
        return Embedder(named.cfg, self.cache)

    def pairs(self, sentences: Sequence[Sentence], named: NamedEmbedder) -> TrainingSet:
        return build_training_set(list(sentences), self.embedder(named), self.vocab)

    def flush(self) -> None:
        if self.cache is not None:
            self.cache.save()

    def train_split(self) -> tuple[list[Sentence], list[Sentence], list[Sentence], str]:
        """(validation, training pool, in-distribution test, test dataset name)."""
        if self._split is None:
            self._split = self._make_split()
        return self._split

    def _make_split(self):
        cfg = self.cfg
        sents = self.sentences(cfg.train_corpus)
        order = np.random.default_rng(derive_seed(cfg.seed, "split", Path(cfg.train_corpus).stem)) \
            .permutation(len(sents))
        sents = [sents[i] for i in order]
        if cfg.heldout_corpus:
            test = self.sentences(cfg.heldout_corpus)[: cfg.eval_size]
            name = Path(cfg.heldout_corpus).stem
        else:
            test, sents = sents[: cfg.eval_size], sents[cfg.eval_size:]
            name = Path(cfg.train_corpus).stem + "-heldout"
        return sents[: cfg.val_size], sents[cfg.val_size:], test, name

    def full_train_size(self) -> int:
        sizes = [s for s in self.cfg.train_sizes if s > 0]
        pool = len(self.train_split()[1])
        return min(max(sizes), pool) if sizes else pool

    # -- decoders ---------------------------------------------------------------
    def fresh_params(self, named: NamedEmbedder, hidden: int) -> DecoderParams:
        cfg = self.cfg
        return init_params(self.vocab.size, named.cfg.dim, hidden, cfg.embed_width,
                           cfg.context_window, seed=derive_seed(cfg.seed, "init", named.label, hidden))

    def trained(self, named: NamedEmbedder, hidden: int, train_sents: Sequence[Sentence],
                val_sents: Sequence[Sentence], tag: str) -> DecoderParams:
        """Train (or load from the checkpoint store) a decoder for one cell."""
        cfg = self.cfg
        if not train_sents:
            return self.fresh_params(named, hidden)
        tcfg = replace(cfg.train, seed=derive_seed(cfg.seed, "train", tag, named.label, hidden,
                                                   len(train_sents)))
        key = _digest({"vocab": self.vocab.hash, "emb": named.cfg.fingerprint, "h": hidden,
                       "m": cfg.embed_width, "n": cfg.context_window, "train": tcfg.to_dict(),
                       "seed": cfg.seed, "label": named.label,
                       "data": _digest([s.tokens for s in train_sents]),
                       "val": _digest([s.tokens for s in val_sents])})
        path = self.out / "checkpoints" / f"{tag}-{named.label}-h{hidden}-n{len(train_sents)}-{key}.ckpt"
        with self._guard:
            lock = self._locks.setdefault(path, threading.Lock())
        # parallel cells sharing a decoder wait for one training run
        with lock:
            if path not in self._decoders:
                self._decoders[path] = self._train_or_load(path, named, hidden, train_sents, val_sents, tcfg)
            return self._decoders[path]

    def _train_or_load(self, path, named, hidden, train_sents, val_sents, tcfg) -> DecoderParams:
        if path.exists():
            return load_checkpoint(path, self.vocab.hash)
        ts = self.pairs(train_sents, named)
        vs = self.pairs(val_sents, named) if val_sents else None
        params, hist = train(self.fresh_params(named, hidden), ts, tcfg, vs)
        log.info("trained %s h=%d n=%d: loss %.3f -> %.3f (best epoch %d)", named.label, hidden,
                 len(train_sents), hist.train_loss[0], hist.train_loss[-1], hist.best_epoch)
        save_checkpoint(path, params, self.vocab.hash, named.cfg.fingerprint,
                        {"train": tcfg.to_dict(), "hidden": hidden, "history": hist.train_loss})
        return params

    def main_decoder(self, named: NamedEmbedder, hidden: int) -> DecoderParams:
        val, pool, _, _ = self.train_split()
        return self.trained(named, hidden, pool[: self.full_train_size()], val, "main")

    def feature_set(self) -> FeatureSet:
        ref = self.cfg.feature_reference or self.cfg.train_corpus
        return build_feature_set(self.texts(ref), self.cfg.feature_k, provenance=Path(ref).name)


# -- evaluation -------------------------------------------------------------------

def evaluate_reconstruction(params: DecoderParams, test: TrainingSet, gen: GenConfig,
                            n_trials: int, master_seed: int, dataset: str) -> dict[str, TrialStats]:
    """Beam BLEU-1/ROUGE-1 plus ``n_trials`` sampled-decode corpus scores."""
    refs = [p.target_tokens[:-1] for p in test.pairs]
    beams = [beam_decode(params, p.conditioning, gen).tokens for p in test.pairs]
    out = {}
    for name, fn in (("bleu1_beam", bleu1), ("rouge1_beam", rouge1)):
        score = corpus_score(zip(beams, refs), fn)
        out[name] = TrialStats((score,), score, 0.0)
    b_trials, r_trials = [], []
    for t in range(n_trials):
        rng = np.random.default_rng(derive_seed(master_seed, "eval", dataset, t))
        cands = [sample_decode(params, p.conditioning, gen, rng).tokens for p in test.pairs]
        b_trials.append(corpus_score(zip(cands, refs), bleu1))
        r_trials.append(corpus_score(zip(cands, refs), rouge1))
    out["bleu1"] = _stats(b_trials)
    out["rouge1"] = _stats(r_trials)
    return out


def _stats(trials: Sequence[float]) -> TrialStats:
    if len(trials) >= 2:
        return aggregate_trials(trials)
    return TrialStats(tuple(trials), float(trials[0]), 0.0)


def _rows(experiment: str, scores: dict[str, TrialStats], **factors) -> list[ReportRow]:
    return [ReportRow.from_stats(scores[m], experiment=experiment, metric=m, **factors)
            for m in ("bleu1", "rouge1", "bleu1_beam", "rouge1_beam")]


# -- experiments --------------------------------------------------------------------

def run_in_distribution(cfg: ExperimentConfig, ws: Workspace | None = None) -> list[ReportRow]:
    """Decoder sizes x training-set sizes x target embedders on held-out text."""
    ws = ws or Workspace(cfg)
    val, pool, test_sents, test_name = ws.train_split()
    sizes = cfg.train_sizes or [len(pool)]
    cells = [(named, n, h) for named in cfg.embedder_sweep for n in sizes for h in cfg.hidden_sizes]

    def run_cell(cell):
        named, n, h = cell
        params = ws.trained(named, h, pool[:n], val, "main") if n > 0 else ws.fresh_params(named, h)
        scores = evaluate_reconstruction(params, ws.pairs(test_sents, named), cfg.gen,
                                         cfg.n_trials, cfg.seed, test_name)
        return _rows("in_distribution", scores, dataset=test_name, target_model=named.label,
                     attack_size=f"h{h}", train_size=str(n))

    return [r for rows in _pmap(run_cell, cells, cfg.workers) for r in rows]


def _eval_sets(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    return [(e["name"], e["path"]) for e in cfg.eval_corpora]


def run_ood(cfg: ExperimentConfig, ws: Workspace | None = None) -> list[ReportRow]:
    """Evaluate the fully trained decoder on every eval corpus; add similarity rows."""
    ws = ws or Workspace(cfg)
    fs = ws.feature_set()
    train_texts = ws.texts(cfg.train_corpus)
    rows = []
    for name, path in _eval_sets(cfg):
        sim = dataset_similarity(train_texts, ws.texts(path), fs)
        rows.append(ReportRow("ood", name, "", "", "similarity", sim, 0.0, 1,
                              train_size="", level=fs.provenance, trials=(sim,)))
    cells = [(named, h, name, path) for named in cfg.embedder_sweep for h in cfg.hidden_sizes
             for name, path in _eval_sets(cfg)]

    def run_cell(cell):
        named, h, name, path = cell
        params = ws.main_decoder(named, h)
        test = ws.pairs(ws.sentences(path, name)[: cfg.eval_size], named)
        scores = evaluate_reconstruction(params, test, cfg.gen, cfg.n_trials, cfg.seed, name)
        return _rows("ood", scores, dataset=name, target_model=named.label, attack_size=f"h{h}",
                     train_size=str(ws.full_train_size()))

    return rows + [r for rs in _pmap(run_cell, cells, cfg.workers) for r in rs]


def _few_shot_source(cfg: ExperimentConfig) -> tuple[str, str]:
    for name, path in _eval_sets(cfg):
        if name == cfg.few_shot_corpus:
            return name, path
    if not cfg.few_shot_corpus:
        raise ValueError("few_shot_corpus is not configured")
    return Path(cfg.few_shot_corpus).stem, cfg.few_shot_corpus


def run_few_shot(cfg: ExperimentConfig, ws: Workspace | None = None) -> list[ReportRow]:
    """Continue training on ``s`` disclosed OOD texts and re-evaluate on held-out OOD text.

    The first ``eval_size`` sentences of the OOD corpus are the test set (the
    same slice :func:`run_ood` scores); disclosed texts come from the rest.
    A fifth of each disclosed set (when it has at least 5 texts) is held back
    for picking the best continuation epoch, the starting point included.
    """
    ws = ws or Workspace(cfg)
    name, path = _few_shot_source(cfg)
    sents = ws.sentences(path, name)
    test_sents, pool = sents[: cfg.eval_size], sents[cfg.eval_size:]
    rows = []
    for named in cfg.embedder_sweep:
        test = ws.pairs(test_sents, named)
        for h in cfg.hidden_sizes:
            base = ws.main_decoder(named, h)
            for s in cfg.few_shot_sizes:
                if s > len(pool):
                    raise ValueError(f"few-shot size {s} exceeds the {len(pool)} disclosed texts available")
                params = base
                if s > 0:
                    disclosed = ws.pairs(pool[:s], named)
                    n_val = s // 5 if s >= 5 else 0
                    fit, val = disclosed.head(s - n_val), disclosed.subset(range(s - n_val, s))
                    ccfg = replace(cfg.train, epochs=max(1, cfg.train.epochs // 4),
                                   seed=derive_seed(cfg.seed, "few_shot", named.label, h, s))
                    params = continue_training(base, fit, ccfg, val if n_val else None)
                scores = evaluate_reconstruction(params, test, cfg.gen, cfg.n_trials, cfg.seed, name)
                rows += _rows("few_shot", scores, dataset=name, target_model=named.label,
                              attack_size=f"h{h}", train_size=str(ws.full_train_size()), level=str(s))
    return rows


def length_buckets(sentences: Sequence[Sentence], buckets: Sequence[Sequence[int]],
                   limit: int | None = None) -> list[list[Sentence]]:
    out = []
    for lo, hi in buckets:
        members = [s for s in sentences if lo <= len(s.tokens) <= hi][:limit]
        if not members:
            raise EmptyBucket(f"no sentences with {lo}-{hi} tokens")
        out.append(members)
    return out


def run_length_study(cfg: ExperimentConfig, ws: Workspace | None = None) -> list[ReportRow]:
    """Shared decoder per (embedder, size); BLEU-1/ROUGE-1 per length bucket.

    The length corpus is shuffled; 40% of it is the bucketed test pool and the
    remainder trains the decoder.
    """
    ws = ws or Workspace(cfg)
    path = cfg.length_corpus or cfg.train_corpus
    name = Path(path).stem
    sents = ws.sentences(path, name)
    order = np.random.default_rng(derive_seed(cfg.seed, "length-split", name)).permutation(len(sents))
    sents = [sents[i] for i in order]
    n_test = int(0.4 * len(sents))
    test_pool, rest = sents[:n_test], sents[n_test:]
    val, train_sents = rest[: cfg.val_size], rest[cfg.val_size:]
    buckets = length_buckets(test_pool, cfg.length_buckets, cfg.eval_size)
    rows = []
    for named in cfg.embedder_sweep:
        for h in cfg.hidden_sizes:
            params = ws.trained(named, h, train_sents, val, "length")
            for (lo, hi), members in zip(cfg.length_buckets, buckets):
                level = f"{lo}-{hi}"
                scores = evaluate_reconstruction(params, ws.pairs(members, named), cfg.gen,
                                                 cfg.n_trials, cfg.seed, f"{name}:{level}")
                rows += _rows("length", scores, dataset=name, target_model=named.label,
                              attack_size=f"h{h}", train_size=str(len(train_sents)), level=level)
    return rows


Reconstructor = Callable[[DecoderParams, np.ndarray, str, np.random.Generator], Sequence[str]]


def sampling_reconstructor(vocab: Vocabulary, gen: GenConfig) -> Reconstructor:
    def rec(params, conditioning, text, rng):
        return vocab.decode(sample_decode(params, conditioning, gen, rng).tokens)
    return rec


def copy_reconstructor(params, conditioning, text, rng) -> list[str]:
    """Perfect reconstruction stub: returns the original text's tokens."""
    return tokenize(text)


def run_attribute_eval(cfg: ExperimentConfig, task_files: Sequence[str] | None = None,
                       ws: Workspace | None = None,
                       reconstructor: Reconstructor | None = None) -> list[ReportRow]:
    """Reconstructed-mode accuracy per (proxy, decoder size, attribute) plus the direct row."""
    ws = ws or Workspace(cfg)
    target = cfg.target_embedder
    recon = reconstructor or sampling_reconstructor(ws.vocab, cfg.gen)
    rows = []
    for path in (task_files if task_files is not None else cfg.task_files):
        task = AttributeTask.load(path)
        texts = [t for t, _ in task.instances]
        conds = ws.embedder(target).embed_batch(texts)
        for h in cfg.hidden_sizes:
            params = ws.main_decoder(target, h)
            for proxy in cfg.proxy_embedders:
                accs = []
                for t in range(cfg.n_trials):
                    rng = np.random.default_rng(derive_seed(cfg.seed, "attribute", task.attribute_name, t))
                    recs = [recon(params, c, text, rng) if c is not None else []
                            for c, text in zip(conds, texts)]
                    accs.append(task_accuracy(task, predict_reconstructed(recs, task, ws.embedder(proxy))))
                rows.append(ReportRow.from_stats(_stats(accs), experiment="attribute",
                                                 dataset=task.attribute_name, target_model=proxy.label,
                                                 attack_size=f"h{h}", metric="accuracy",
                                                 train_size=str(ws.full_train_size()), level="reconstructed"))
        direct = ws.embedder(NamedEmbedder(target.label, target.cfg.replace(min_query_tokens=0)))
        cands = [direct.embed(c) for c in task.candidates]
        preds = [infer_attribute_direct(text, task, direct, cands) for text in texts]
        acc = task_accuracy(task, preds)
        rows.append(ReportRow("attribute", task.attribute_name, target.label, "none", "accuracy",
                              acc, 0.0, 1, train_size="", level="direct", trials=(acc,)))
    return rows


RUNNERS = {
    "in_distribution": run_in_distribution,
    "ood": run_ood,
    "few_shot": run_few_shot,
    "length": run_length_study,
    "attribute": lambda cfg, ws=None: run_attribute_eval(cfg, ws=ws),
}


def run(cfg: ExperimentConfig, experiment: str, emit: bool = True) -> list[ReportRow]:
    """Run one experiment (or ``all``), mark significance and write the report."""
    names = EXPERIMENTS if experiment == "all" else (experiment,)
    for n in names:
        if n not in RUNNERS:
            raise ValueError(f"unknown experiment {n!r}; choose from {', '.join(EXPERIMENTS)} or all")
    ws = Workspace(cfg)
    rows = [r for n in names for r in RUNNERS[n](cfg, ws=ws)]
    ws.flush()
    mark_significance(rows)
    if emit:
        emit_report(rows, cfg.out_dir, f"{cfg.name}-{experiment}")
    return rows
