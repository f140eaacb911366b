"""Embedding-conditioned feed-forward n-gram language model (the attack decoder).

For conditioning vector ``e`` and the last ``n`` token ids ``c`` (left-padded
with BOS)::

    z      = tanh(e @ cond_proj + concat(token_embed[c]) @ ctx_proj + hidden_bias)
    logits = z @ out_proj + out_bias
    logp   = log_softmax(logits)

Gradients are derived by hand (softmax cross-entropy through a tanh layer).
Training minimises the mean per-pair loss over mini-batches, where a pair's
loss is the teacher-forced negative log-likelihood of its tokens including
the terminal EOS.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._container import read_container, write_container
from .corpus import BOS
from .errors import CorruptCheckpoint, DivergenceDetected, ShapeMismatch, VocabMismatch
from .trainset import TrainingPair, TrainingSet

log = logging.getLogger(__name__)

PARAM_NAMES = ("token_embed", "cond_proj", "ctx_proj", "hidden_bias", "out_proj", "out_bias")
CKPT_MAGIC = b"EMBINVCK"
CKPT_VERSION = 1
_EVAL_CHUNK = 8192


@dataclass(eq=False)
class DecoderParams:
    token_embed: np.ndarray  # (V, m)
    cond_proj: np.ndarray    # (d, h)
    ctx_proj: np.ndarray     # (n*m, h)
    hidden_bias: np.ndarray  # (h,)
    out_proj: np.ndarray     # (h, V)
    out_bias: np.ndarray     # (V,)
    context_window: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        V, m = self.token_embed.shape
        d, h = self.cond_proj.shape
        expect = {"ctx_proj": (self.context_window * m, h), "hidden_bias": (h,),
                  "out_proj": (h, V), "out_bias": (V,)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def vocab_size(self) -> int:
        return self.token_embed.shape[0]

    @property
    def embed_width(self) -> int:
        return self.token_embed.shape[1]

    @property
    def cond_dim(self) -> int:
        return self.cond_proj.shape[0]

    @property
    def hidden(self) -> int:
        return self.cond_proj.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "DecoderParams":
        return DecoderParams(**{k: v.copy() for k, v in self.arrays().items()},
                             context_window=self.context_window, meta=dict(self.meta))

    def zeros_like(self) -> "DecoderParams":
        return DecoderParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()},
                             context_window=self.context_window)

    def equals(self, other: "DecoderParams") -> bool:
        return self.context_window == other.context_window and all(
            np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))


def init_params(vocab_size: int, cond_dim: int, hidden: int = 128, embed_width: int = 32,
                context_window: int = 4, seed: int = 0) -> DecoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    The token table is a lookup (one-hot fan-in of 1), so it draws from U(-1, 1).
    """
    rng = np.random.default_rng(seed)

    def u(shape, fan_in):
        b = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-b, b, size=shape)

    n, m = context_window, embed_width
    return DecoderParams(
        token_embed=u((vocab_size, m), 1),
        cond_proj=u((cond_dim, hidden), cond_dim),
        ctx_proj=u((n * m, hidden), n * m),
        hidden_bias=np.zeros(hidden),
        out_proj=u((hidden, vocab_size), hidden),
        out_bias=np.zeros(vocab_size),
        context_window=n,
    )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    mx = logits.max(axis=-1, keepdims=True)
    shifted = logits - mx
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _hidden(params: DecoderParams, cond: np.ndarray, ctx: np.ndarray):
    x_ctx = params.token_embed[ctx].reshape(ctx.shape[0], -1)
    z = np.tanh(cond @ params.cond_proj + x_ctx @ params.ctx_proj + params.hidden_bias)
    return x_ctx, z


def forward_batch(params: DecoderParams, cond: np.ndarray, ctx: np.ndarray) -> np.ndarray:
    """Log-probabilities for rows of conditioning vectors ``(B, d)`` and contexts ``(B, n)``."""
    _, z = _hidden(params, cond, ctx)
    return _log_softmax(z @ params.out_proj + params.out_bias)


def context_of(prefix: Sequence[int], n: int) -> list[int]:
    """Last ``n`` ids of ``prefix``, left-padded with BOS."""
    prefix = list(prefix)[-n:] if n else []
    return [BOS] * (n - len(prefix)) + prefix


def forward_logprobs(params: DecoderParams, conditioning: np.ndarray,
                     context: Sequence[int]) -> np.ndarray:
    conditioning = np.asarray(conditioning, dtype=np.float64)
    if conditioning.shape != (params.cond_dim,):
        raise ShapeMismatch(f"conditioning has shape {conditioning.shape}, expected ({params.cond_dim},)")
    if len(context) != params.context_window:
        raise ShapeMismatch(f"context length {len(context)} != window {params.context_window}")
    ctx = np.asarray(context, dtype=np.int64)[None, :]
    return forward_batch(params, conditioning[None, :], ctx)[0]


# -- flattened teacher-forcing view ------------------------------------------

class _Flat:
    """All (pair, position) rows of a pair list, ready for vectorised passes."""

    def __init__(self, pairs: Sequence[TrainingPair], n: int):
        self.n_pairs = len(pairs)
        self.cond = np.array([p.conditioning for p in pairs], dtype=np.float64)
        lengths = np.array([len(p.target_tokens) for p in pairs], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(lengths)])
        self.pair_of = np.repeat(np.arange(len(pairs)), lengths)
        ctx, tgt = [], []
        for p in pairs:
            padded = [BOS] * n + list(p.target_tokens)
            for i, y in enumerate(p.target_tokens):
                ctx.append(padded[i:i + n])
                tgt.append(y)
        self.ctx = np.array(ctx, dtype=np.int64).reshape(len(tgt), n)
        self.tgt = np.array(tgt, dtype=np.int64)

    def rows_for(self, pair_idx: np.ndarray) -> np.ndarray:
        return np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1]) for i in pair_idx])


def _check_dims(params: DecoderParams, pairs: Sequence[TrainingPair]) -> None:
    for p in pairs:
        if p.conditioning.shape != (params.cond_dim,):
            raise ShapeMismatch(f"pair conditioning dim {p.conditioning.shape} != {params.cond_dim}")
        if max(p.target_tokens) >= params.vocab_size:
            raise ShapeMismatch("target token id outside the decoder vocabulary")


def _pair_losses(params: DecoderParams, flat: _Flat) -> np.ndarray:
    nll = np.empty(len(flat.tgt))
    for s in range(0, len(flat.tgt), _EVAL_CHUNK):
        sl = slice(s, s + _EVAL_CHUNK)
        logp = forward_batch(params, flat.cond[flat.pair_of[sl]], flat.ctx[sl])
        nll[sl] = -logp[np.arange(logp.shape[0]), flat.tgt[sl]]
    return np.bincount(flat.pair_of, weights=nll, minlength=flat.n_pairs)


def pair_loss(params: DecoderParams, pair: TrainingPair) -> float:
    """Teacher-forced negative log-likelihood of the target tokens (EOS included)."""
    _check_dims(params, [pair])
    return float(_pair_losses(params, _Flat([pair], params.context_window))[0])


def total_loss(params: DecoderParams, dataset: Sequence[TrainingPair] | TrainingSet) -> float:
    """Sum of pair losses over the dataset."""
    pairs = list(dataset)
    if not pairs:
        return 0.0
    _check_dims(params, pairs)
    return float(_pair_losses(params, _Flat(pairs, params.context_window)).sum())


def mean_loss(params: DecoderParams, dataset: Sequence[TrainingPair] | TrainingSet) -> float:
    pairs = list(dataset)
    return total_loss(params, pairs) / len(pairs) if pairs else 0.0


def _backward(params: DecoderParams, cond: np.ndarray, ctx: np.ndarray, tgt: np.ndarray,
              weight: np.ndarray, pair_rows=None) -> tuple[float, DecoderParams]:
    """Weighted NLL and its gradient.

    ``cond`` is per pair when ``pair_rows`` maps each row to its pair, else per row.
    """
    cond_rows = cond if pair_rows is None else cond[pair_rows]
    x_ctx, z = _hidden(params, cond_rows, ctx)
    logp = _log_softmax(z @ params.out_proj + params.out_bias)
    rows = np.arange(len(tgt))
    loss = float(-(weight * logp[rows, tgt]).sum())

    dlogits = np.exp(logp)
    dlogits[rows, tgt] -= 1.0
    dlogits *= weight[:, None]
    g = params.zeros_like()
    g.out_proj = z.T @ dlogits
    g.out_bias = dlogits.sum(axis=0)
    dpre = (dlogits @ params.out_proj.T) * (1.0 - z * z)
    g.cond_proj = cond_rows.T @ dpre
    g.ctx_proj = x_ctx.T @ dpre
    g.hidden_bias = dpre.sum(axis=0)
    dx = (dpre @ params.ctx_proj.T).reshape(ctx.shape[0], ctx.shape[1], -1)
    np.add.at(g.token_embed, ctx, dx)
    return loss, g


def gradients(params: DecoderParams, batch: Sequence[TrainingPair]) -> DecoderParams:
    """Exact gradient of the mean pair loss over ``batch``."""
    return loss_and_gradients(params, batch)[1]


def loss_and_gradients(params: DecoderParams, batch: Sequence[TrainingPair]) -> tuple[float, DecoderParams]:
    batch = list(batch)
    if not batch:
        raise ValueError("batch is empty")
    _check_dims(params, batch)
    flat = _Flat(batch, params.context_window)
    w = np.full(len(flat.tgt), 1.0 / len(batch))
    return _backward(params, flat.cond, flat.ctx, flat.tgt, w, flat.pair_of)


# -- optimisation -------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: Optional[float] = 5.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    """Per-epoch mean pair losses; index 0 is the state before training."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0


class _Adam:
    def __init__(self, params: DecoderParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: DecoderParams, grad: DecoderParams) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1 - c.beta1 ** self.t
        bc2 = 1 - c.beta2 ** self.t
        for name in PARAM_NAMES:
            g = getattr(grad, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            getattr(params, name)[...] -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def _clip(grad: DecoderParams, max_norm: Optional[float]) -> None:
    if not max_norm:
        return
    norm = np.sqrt(sum(float((a * a).sum()) for a in grad.arrays().values()))
    if norm > max_norm:
        for a in grad.arrays().values():
            a *= max_norm / norm


def _mean_loss_flat(params: DecoderParams, flat: _Flat) -> float:
    return float(_pair_losses(params, flat).mean())


def train(params: DecoderParams, training_set: Sequence[TrainingPair] | TrainingSet,
          cfg: TrainConfig, validation_set: Sequence[TrainingPair] | TrainingSet | None = None,
          ) -> tuple[DecoderParams, TrainHistory]:
    """Mini-batch optimisation of the mean pair loss.

    Returns the parameters with the lowest validation loss seen (the final
    parameters when no validation set is given) and the loss history.
    """
    pairs = list(training_set)
    val_pairs = list(validation_set) if validation_set is not None else []
    params = params.copy()
    hist = TrainHistory()
    if not pairs:
        return params, hist
    _check_dims(params, pairs + val_pairs)
    n = params.context_window
    flat = _Flat(pairs, n)
    vflat = _Flat(val_pairs, n) if val_pairs else None

    def record(epoch: int) -> None:
        tl = _mean_loss_flat(params, flat)
        hist.train_loss.append(tl)
        if not np.isfinite(tl):
            raise DivergenceDetected(f"training loss became {tl} at epoch {epoch}")
        if vflat is not None:
            hist.val_loss.append(_mean_loss_flat(params, vflat))

    record(0)
    best = params.copy()
    best_val = hist.val_loss[0] if vflat is not None else None
    rng = np.random.default_rng(cfg.seed)
    opt = _Adam(params, cfg) if cfg.optimizer == "adam" else None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(pairs))
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            rows = flat.rows_for(idx)
            w = np.full(len(rows), 1.0 / len(idx))
            loss, grad = _backward(params, flat.cond[flat.pair_of[rows]], flat.ctx[rows],
                                   flat.tgt[rows], w)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite batch loss at epoch {epoch}")
            if cfg.learning_rate == 0:
                continue
            _clip(grad, cfg.grad_clip_norm)
            if opt is not None:
                opt.step(params, grad)
            else:
                for name in PARAM_NAMES:
                    getattr(params, name)[...] -= cfg.learning_rate * getattr(grad, name)
        record(epoch)
        log.debug("epoch %d train %.4f val %s", epoch, hist.train_loss[-1],
                  hist.val_loss[-1] if hist.val_loss else "-")
        if vflat is not None and hist.val_loss[-1] < best_val:
            best_val = hist.val_loss[-1]
            best = params.copy()
            hist.best_epoch = epoch
    if vflat is None:
        hist.best_epoch = cfg.epochs
        return params, hist
    return best, hist


def continue_training(params: DecoderParams, extra_set: Sequence[TrainingPair] | TrainingSet,
                      cfg: TrainConfig, validation_set=None) -> DecoderParams:
    """Further optimisation from ``params`` on additional pairs."""
    if len(list(extra_set)) == 0:
        return params.copy()
    return train(params, extra_set, cfg, validation_set)[0]


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path: str | Path, params: DecoderParams, vocab_hash: str = "",
                    embedder_fingerprint: str = "", config: dict | None = None) -> None:
    arrays = params.arrays()
    header = {
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "order": list(PARAM_NAMES),
        "context_window": params.context_window,
        "vocab_hash": vocab_hash or params.meta.get("vocab_hash", ""),
        "embedder_fingerprint": embedder_fingerprint or params.meta.get("embedder_fingerprint", ""),
        "config": config if config is not None else params.meta.get("config", {}),
    }
    payload = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes() for k in PARAM_NAMES)
    write_container(path, CKPT_MAGIC, CKPT_VERSION, header, payload)


def load_checkpoint(path: str | Path, vocab_hash: str | None = None) -> DecoderParams:
    """Load parameters; refuses files built against a different vocabulary."""
    try:
        header, payload = read_container(path, CKPT_MAGIC, CKPT_VERSION, CorruptCheckpoint)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise CorruptCheckpoint(str(exc)) from exc
    if vocab_hash is not None and header["vocab_hash"] != vocab_hash:
        raise VocabMismatch(f"checkpoint vocab {header['vocab_hash']} != {vocab_hash}")
    arrays, pos = {}, 0
    try:
        for name in header["order"]:
            shape = tuple(header["shapes"][name])
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=pos) \
                .astype(np.float64).reshape(shape)
            pos += count * 8
        if pos != len(payload):
            raise CorruptCheckpoint(f"{path}: payload size does not match shapes")
        return DecoderParams(**arrays, context_window=header["context_window"],
                             meta={"vocab_hash": header["vocab_hash"],
                                   "embedder_fingerprint": header["embedder_fingerprint"],
                                   "config": header["config"]})
    except (KeyError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
