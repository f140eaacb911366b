"""Reconstruct token sequences from an embedding: greedy, beam and sampling.

Shared conventions:

* PAD, BOS and UNK are never generated; EOS is disallowed at the first step.
* ``max_len`` bounds the number of decisions, so a finished hypothesis holds
  at most ``max_len - 1`` tokens.
* ``Hypothesis.logprob`` is the sum of the *unmasked* model log-probabilities
  of every decision taken (EOS included), so re-scoring with
  :func:`embinvert.decoder.forward_logprobs` reproduces it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import BOS, EOS, PAD, UNK
from .decoder import DecoderParams, context_of, forward_batch, forward_logprobs

_FORBIDDEN = (PAD, BOS, UNK)


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    finished: bool


@dataclass(frozen=True)
class GenConfig:
    beam_width: int = 4
    max_len: int = 64
    temperature: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


def _mask(logp: np.ndarray, step: int) -> np.ndarray:
    """Copy of ``logp`` with disallowed tokens set to -inf (step is 0-based)."""
    out = logp.copy()
    out[..., list(_FORBIDDEN)] = -np.inf
    if step == 0:
        out[..., EOS] = -np.inf
    return out


def greedy_decode(params: DecoderParams, conditioning: np.ndarray, cfg: GenConfig) -> Hypothesis:
    """Pick the most likely allowed token at each step (ties go to the smallest id)."""
    n = params.context_window
    tokens: list[int] = []
    total = 0.0
    for step in range(cfg.max_len):
        logp = forward_logprobs(params, conditioning, context_of(tokens, n))
        tok = int(np.argmax(_mask(logp, step)))
        total += float(logp[tok])
        if tok == EOS:
            return Hypothesis(tuple(tokens), total, True)
        tokens.append(tok)
    return Hypothesis(tuple(tokens), total, False)


def beam_decode(params: DecoderParams, conditioning: np.ndarray, cfg: GenConfig,
                return_all: bool = False):
    """Beam search over raw joint log-probability (no length normalisation).

    Every step expands each live hypothesis over the vocabulary and keeps the
    best ``k - len(finished)`` candidates; those ending in EOS retire to the
    finished pool.  Search stops once ``k`` hypotheses have finished or the
    live hypotheses reach ``max_len``.  Ranking is by score, then by the
    lexicographically smaller token sequence.

    Returns the best hypothesis, or with ``return_all`` the pair
    ``(best, ranked list of finished-else-live hypotheses)``.
    """
    k = cfg.beam_width
    n = params.context_window
    cond = np.asarray(conditioning, dtype=np.float64)
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[Hypothesis] = []
    for step in range(cfg.max_len):
        slots = k - len(finished)
        if slots <= 0 or not live:
            break
        ctx = np.array([context_of(toks, n) for toks, _ in live], dtype=np.int64)
        logp = forward_batch(params, np.broadcast_to(cond, (len(live), cond.shape[0])), ctx)
        allowed = _mask(logp, step)
        scores = np.array([s for _, s in live])[:, None] + allowed
        keep = np.isfinite(scores)
        if keep.sum() > slots:
            # anything tied with the slots-th best survives to the exact sort below
            cutoff = np.partition(scores[keep], -slots)[-slots]
            keep &= scores >= cutoff
        cand_rows, cand_toks = np.nonzero(keep)
        cand = [(float(scores[r, t]), live[r][0] + (int(t),), float(logp[r, t]), int(r))
                for r, t in zip(cand_rows, cand_toks)]
        cand.sort(key=lambda c: (-c[0], c[1]))
        new_live = []
        for score, seq, _, _ in cand[:slots]:
            if seq[-1] == EOS:
                finished.append(Hypothesis(seq[:-1], score, True))
            else:
                new_live.append((seq, score))
        live = new_live
    pool = finished or [Hypothesis(t, s, False) for t, s in live]
    pool = sorted(pool, key=lambda h: (-h.logprob, h.tokens))
    best = pool[0]
    return (best, pool) if return_all else best


def sample_decode(params: DecoderParams, conditioning: np.ndarray, cfg: GenConfig,
                  rng: Optional[np.random.Generator] = None) -> Hypothesis:
    """Ancestral sampling from ``softmax(logits / temperature)`` over allowed tokens.

    ``temperature == 0`` is the greedy limit and delegates to :func:`greedy_decode`.
    """
    if cfg.temperature == 0:
        return greedy_decode(params, conditioning, cfg)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n = params.context_window
    tokens: list[int] = []
    total = 0.0
    for step in range(cfg.max_len):
        logp = forward_logprobs(params, conditioning, context_of(tokens, n))
        scaled = _mask(logp, step) / cfg.temperature
        scaled -= scaled.max()
        p = np.exp(scaled)
        p /= p.sum()
        tok = int(rng.choice(len(p), p=p))
        total += float(logp[tok])
        if tok == EOS:
            return Hypothesis(tuple(tokens), total, True)
        tokens.append(tok)
    return Hypothesis(tuple(tokens), total, False)


def score_sequence(params: DecoderParams, conditioning: np.ndarray, tokens, finished: bool) -> float:
    """Joint log-probability of ``tokens`` (plus EOS when ``finished``)."""
    seq = list(tokens) + ([EOS] if finished else [])
    total = 0.0
    for i, tok in enumerate(seq):
        total += float(forward_logprobs(params, conditioning, context_of(seq[:i], params.context_window))[tok])
    return total


def decode(params: DecoderParams, conditioning: np.ndarray, cfg: GenConfig, mode: str = "beam",
           rng: Optional[np.random.Generator] = None) -> Hypothesis:
    if mode == "beam":
        return beam_decode(params, conditioning, cfg)
    if mode == "greedy":
        return greedy_decode(params, conditioning, cfg)
    if mode == "sample":
        return sample_decode(params, conditioning, cfg, rng)
    raise ValueError(f"unknown decode mode {mode!r}")
