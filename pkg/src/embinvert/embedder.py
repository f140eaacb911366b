"""Target embedders: deterministic built-in encoders and a remote HTTP client.

Built-in kinds
--------------
``hashed_bag``
    Mean of per-token pseudo-random sign vectors, L2-normalised.  Order-free.
``positional_mix``
    First ``dim // 2`` coordinates are a hashed bag; the rest are a
    ``gamma``-decayed, position-weighted sum of a second family of token
    vectors.  Both halves are normalised and concatenated with weight
    ``1/sqrt(2)`` each, so the result is unit-norm and order-sensitive.

Refusal of short queries is simulated through ``min_query_tokens``.  In batch
calls a refused text yields ``None`` instead of a vector.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .corpus import tokenize
from .errors import DimensionMismatch, EmptyText, RefusedShortText, RemoteUnavailable

log = logging.getLogger(__name__)

KINDS = ("hashed_bag", "positional_mix", "remote")
API_KEY_ENV = "EMBINVERT_API_KEY"
CACHE_VERSION = 1

Text = Union[str, Sequence[str]]


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hashed_bag"
    dim: int = 64
    seed: int = 0
    gamma: float = 0.9
    min_query_tokens: int = 0
    endpoint: Optional[str] = None
    max_in_flight: int = 4
    request_batch_size: int = 32
    timeout: float = 10.0
    max_attempts: int = 3
    backoff: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote embedder needs an endpoint")

    @property
    def fingerprint(self) -> str:
        # transport settings do not change the vectors
        ident = {"kind": self.kind, "dim": self.dim, "seed": self.seed,
                 "min_query_tokens": self.min_query_tokens}
        if self.kind == "positional_mix":
            ident["gamma"] = self.gamma
        if self.kind == "remote":
            ident["endpoint"] = self.endpoint
        blob = json.dumps(ident, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "EmbedderConfig":
        return EmbedderConfig(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedderConfig":
        return cls(**d)


@lru_cache(maxsize=1 << 17)
def _token_vector(salt: str, seed: int, token: str, dim: int) -> np.ndarray:
    key = hashlib.blake2b(f"{salt}\x1f{seed}\x1f{token}".encode(), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(key, "little"))
    v = (rng.integers(0, 2, size=dim) * 2 - 1) / np.sqrt(dim)
    v.setflags(write=False)
    return v


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _as_tokens(text: Text) -> list[str]:
    return tokenize(text) if isinstance(text, str) else list(text)


def _bag(tokens: list[str], seed: int, dim: int) -> np.ndarray:
    acc = np.zeros(dim)
    # sorted accumulation keeps the float sum exactly order-free
    for tok in sorted(tokens):
        acc += _token_vector("bag", seed, tok, dim)
    if not acc.any():
        # exact cancellation is only possible at tiny dims; stay order-free
        acc = _token_vector("bag", seed, min(tokens), dim).copy()
    return acc / len(tokens)


def _positional(tokens: list[str], seed: int, dim: int, gamma: float) -> np.ndarray:
    acc = np.zeros(dim)
    w = 1.0
    for tok in tokens:
        acc += w * _token_vector("pos", seed, tok, dim)
        w *= gamma
    return acc


def _builtin_embed(tokens: list[str], cfg: EmbedderConfig) -> np.ndarray:
    if cfg.kind == "hashed_bag":
        return _unit(_bag(tokens, cfg.seed, cfg.dim))
    half = cfg.dim // 2
    a = _unit(_bag(tokens, cfg.seed, half))
    b = _unit(_positional(tokens, cfg.seed, cfg.dim - half, cfg.gamma))
    return _unit(np.concatenate([a, b]))


def embed(text: Text, cfg: EmbedderConfig) -> np.ndarray:
    """Embed one text; strings are tokenized first."""
    tokens = _as_tokens(text)
    if not tokens:
        raise EmptyText("cannot embed an empty text")
    if len(tokens) < cfg.min_query_tokens:
        raise RefusedShortText(f"{len(tokens)} tokens < min_query_tokens={cfg.min_query_tokens}")
    if cfg.kind == "remote":
        (vec,) = remote_embed([" ".join(tokens) if not isinstance(text, str) else text], cfg)
        if vec is None:
            raise RefusedShortText("remote service refused the text")
        return vec
    return _builtin_embed(tokens, cfg)


def embed_batch(texts: Sequence[Text], cfg: EmbedderConfig) -> list[Optional[np.ndarray]]:
    """Element-wise :func:`embed`; refused or empty texts become ``None``."""
    if cfg.kind == "remote":
        return remote_embed([t if isinstance(t, str) else " ".join(t) for t in texts], cfg)
    out: list[Optional[np.ndarray]] = []
    for t in texts:
        try:
            out.append(embed(t, cfg))
        except (RefusedShortText, EmptyText):
            out.append(None)
    return out


# -- remote -----------------------------------------------------------------

def _post_with_retry(client, cfg: EmbedderConfig, texts: list[str]) -> list:
    url = cfg.endpoint.rstrip("/") + "/embed"
    headers = {}
    key = os.environ.get(API_KEY_ENV)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    last = None
    for attempt in range(cfg.max_attempts):
        try:
            resp = client.post(url, json={"texts": texts}, headers=headers, timeout=cfg.timeout)
            if resp.status_code == 200:
                body = resp.json()
                embs = body["embeddings"]
                if len(embs) != len(texts):
                    raise RemoteUnavailable(f"expected {len(texts)} embeddings, got {len(embs)}")
                return embs
            last = f"HTTP {resp.status_code}"
        except RemoteUnavailable:
            raise
        except Exception as exc:  # transport failures and malformed bodies
            last = repr(exc)
        if attempt + 1 < cfg.max_attempts:
            time.sleep(cfg.backoff * 2**attempt)
    raise RemoteUnavailable(f"{url}: giving up after {cfg.max_attempts} attempts ({last})")


def remote_embed(texts: Sequence[str], cfg: EmbedderConfig, client=None) -> list[Optional[np.ndarray]]:
    """Query ``POST {endpoint}/embed``; ``null`` entries are refusals."""
    import httpx

    texts = list(texts)
    if not texts:
        return []
    own = client is None
    client = client or httpx.Client()
    try:
        chunks = [texts[i:i + cfg.request_batch_size]
                  for i in range(0, len(texts), cfg.request_batch_size)]
        with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
            replies = list(pool.map(lambda c: _post_with_retry(client, cfg, c), chunks))
    finally:
        if own:
            client.close()
    out: list[Optional[np.ndarray]] = []
    for chunk in replies:
        for raw in chunk:
            if raw is None:
                out.append(None)
                continue
            vec = np.asarray(raw, dtype=np.float64)
            if vec.shape != (cfg.dim,):
                raise DimensionMismatch(f"service returned dim {vec.shape}, expected {cfg.dim}")
            if not np.all(np.isfinite(vec)):
                raise RemoteUnavailable("service returned non-finite values")
            out.append(vec)
    return out


# -- cache ------------------------------------------------------------------

def _text_key(text: Text) -> str:
    s = text if isinstance(text, str) else "\x1f".join(text)
    return hashlib.sha256(s.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """JSON store keyed by (embedder fingerprint, text hash).

    Floats are written with ``repr`` precision, so cached vectors are
    bit-identical to freshly computed ones.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.entries: dict[str, dict[str, Optional[list]]] = {}
        self.dirty = False
        if self.path and self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("version") != CACHE_VERSION:
                log.warning("ignoring cache %s with version %s", self.path, data.get("version"))
            else:
                self.entries = data["entries"]

    def get(self, fingerprint: str, text: Text):
        return self.entries.get(fingerprint, {}).get(_text_key(text), KeyError)

    def put(self, fingerprint: str, text: Text, vec: Optional[np.ndarray]) -> None:
        self.entries.setdefault(fingerprint, {})[_text_key(text)] = (
            None if vec is None else [float(x) for x in vec])
        self.dirty = True

    def save(self) -> None:
        if self.path and self.dirty:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self.path.with_suffix(".tmp")
            tmp.write_text(json.dumps({"version": CACHE_VERSION, "entries": self.entries}))
            tmp.replace(self.path)
            self.dirty = False


class Embedder:
    """A configured embedder, optionally backed by an :class:`EmbeddingCache`."""

    def __init__(self, cfg: EmbedderConfig, cache: EmbeddingCache | None = None):
        self.cfg = cfg
        self.cache = cache

    @property
    def fingerprint(self) -> str:
        return self.cfg.fingerprint

    @property
    def dim(self) -> int:
        return self.cfg.dim

    def embed(self, text: Text) -> np.ndarray:
        (vec,) = self.embed_batch([text])
        if vec is None:
            return embed(text, self.cfg)  # re-raise the precise error
        return vec

    def embed_batch(self, texts: Sequence[Text]) -> list[Optional[np.ndarray]]:
        if self.cache is None:
            return embed_batch(texts, self.cfg)
        fp = self.fingerprint
        out: list = [self.cache.get(fp, t) for t in texts]
        missing = [i for i, v in enumerate(out) if v is KeyError]
        if missing:
            fresh = embed_batch([texts[i] for i in missing], self.cfg)
            for i, v in zip(missing, fresh):
                self.cache.put(fp, texts[i], v)
                out[i] = v
        return [None if v is None else np.asarray(v, dtype=np.float64) for v in out]
