"""Command-line entry point: ``embinvert <subcommand> ...``.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 remote error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as C
from .decoder import TrainConfig, init_params, load_checkpoint, save_checkpoint, train
from .embedder import Embedder, EmbedderConfig, EmbeddingCache
from .errors import EmbInvertError
from .generate import GenConfig, decode
from .pipeline.config import ExperimentConfig
from .pipeline.experiments import EXPERIMENTS, derive_seed, evaluate_reconstruction, run, run_attribute_eval
from .pipeline.report import ReportRow, emit_report, mark_significance, rows_from_json, rows_to_csv
from .simdata import FeatureSet, build_feature_set, similarity_matrix
from .trainset import TrainingSet, build_training_set, split

log = logging.getLogger("embinvert")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------------

def _config(args) -> dict:
    if not args.config:
        return {}
    return json.loads(Path(args.config).read_text(encoding="utf-8"))


def _embedder_cfg(args) -> EmbedderConfig:
    cfg = _config(args).get("target", {})
    overrides = {k: getattr(args, k) for k in ("kind", "dim", "gamma", "min_query_tokens", "endpoint")
                 if getattr(args, k, None) is not None}
    if getattr(args, "embed_seed", None) is not None:
        overrides["seed"] = args.embed_seed
    merged = {k: v for k, v in {**cfg, **overrides}.items() if k != "label"}
    return EmbedderConfig(**merged)


def _out(args, *parts) -> Path:
    p = Path(args.out_dir, *parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write(args, text: str) -> None:
    if getattr(args, "output", None):
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_sentences(args, vocab):
    if str(args.corpus).endswith(".jsonl"):
        return C.read_encoded(args.corpus, vocab)
    return C.filter_and_encode(C.read_text_units(args.corpus, not args.document), vocab,
                               args.min_len, args.max_len, Path(args.corpus).stem)


# -- subcommands ---------------------------------------------------------------------

def cmd_segment(args):
    text = Path(args.input).read_text(encoding="utf-8")
    _write(args, "".join(s + "\n" for s in C.segment(text)))


def cmd_build_vocab(args):
    toks = [C.tokenize(s) for p in args.inputs for s in C.read_text_units(p, not args.document)]
    vocab = C.build_vocab(toks, args.max_size, args.min_freq)
    out = Path(args.output) if args.output else _out(args, "vocab.txt")
    vocab.save(out)
    print(f"{vocab.size} entries -> {out} (hash {vocab.hash})")


def cmd_stats(args):
    vocab = C.Vocabulary.load(args.vocab)
    sents = _load_sentences(args, vocab)
    st = C.corpus_stats(sents)
    print(json.dumps({"n_sentences": st.n_sentences, "avg_len": st.avg_len,
                      "vocab_coverage": st.vocab_coverage}, sort_keys=True))
    if args.encode:
        C.write_encoded(args.encode, sents, vocab)


def cmd_embed(args):
    cfg = _embedder_cfg(args)
    cache = EmbeddingCache(_out(args, "cache", "embeddings.json")) if args.cache else None
    emb = Embedder(cfg, cache)
    texts = C.read_text_units(args.input, not args.document)
    vecs = emb.embed_batch(texts)
    if cache:
        cache.save()
    _write(args, "".join(json.dumps({"text": t, "embedding": None if v is None else v.tolist()}) + "\n"
                         for t, v in zip(texts, vecs)))


def cmd_make_trainset(args):
    vocab = C.Vocabulary.load(args.vocab)
    ts = build_training_set(_load_sentences(args, vocab), Embedder(_embedder_cfg(args)), vocab)
    out = Path(args.output) if args.output else _out(args, "trainset.bin")
    if args.split:
        fr = [float(x) for x in args.split.split(",")]
        parts = split(ts, fr, args.seed or 0)
        for name, part in zip(("train", "val", "test"), parts):
            part.save(out.with_name(f"{out.stem}.{name}{out.suffix}"))
            print(f"{name}: {len(part)} pairs")
    else:
        ts.save(out)
        print(f"{len(ts)} pairs ({ts.n_refused} refused) -> {out}")


def cmd_train(args):
    cfgd = _config(args)
    ts = TrainingSet.load(args.trainset)
    val = TrainingSet.load(args.validation) if args.validation else None
    vocab = C.Vocabulary.load(args.vocab)
    if ts.vocab_hash != vocab.hash:
        raise EmbInvertError("training set was built with a different vocabulary")
    tcfg = TrainConfig(**{**cfgd.get("train", {}), **({"seed": args.seed} if args.seed is not None else {})})
    for k in ("epochs", "learning_rate", "batch_size"):
        if getattr(args, k) is not None:
            setattr(tcfg, k, getattr(args, k))
    if args.resume:
        params = load_checkpoint(args.resume, vocab.hash)
    else:
        params = init_params(vocab.size, ts.dim, args.hidden, cfgd.get("embed_width", 32),
                             cfgd.get("context_window", 4), seed=tcfg.seed)
    params, hist = train(params, ts, tcfg, val)
    out = Path(args.output) if args.output else _out(args, "checkpoints", "decoder.ckpt")
    save_checkpoint(out, params, vocab.hash, ts.embedder_fingerprint,
                    {"train": tcfg.to_dict(), "hidden": params.hidden})
    for i, tl in enumerate(hist.train_loss):
        vl = f" val {hist.val_loss[i]:.4f}" if hist.val_loss else ""
        print(f"epoch {i} train {tl:.4f}{vl}")
    print(f"-> {out}")


def _gen_cfg(args) -> GenConfig:
    g = {**_config(args).get("gen", {})}
    for k in ("beam_width", "max_len", "temperature"):
        if getattr(args, k) is not None:
            g[k] = getattr(args, k)
    if args.seed is not None:
        g["seed"] = args.seed
    return GenConfig(**g)


def cmd_decode(args):
    vocab = C.Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint, vocab.hash)
    gen = _gen_cfg(args)
    if args.trainset:
        conds = [p.conditioning for p in TrainingSet.load(args.trainset).pairs]
    else:
        conds = [np.asarray(json.loads(line)["embedding"], dtype=np.float64)
                 for line in Path(args.embeddings).read_text().splitlines() if line.strip()]
    lines = []
    for i, c in enumerate(conds):
        seed = derive_seed(gen.seed, "decode", i)
        h = decode(params, c, gen, args.mode, np.random.default_rng(seed))
        toks = vocab.decode(h.tokens)
        lines.append(json.dumps({"surface": " ".join(toks), "tokens": toks, "logprob": h.logprob,
                                 "finished": h.finished, "mode": args.mode,
                                 "seed": seed if args.mode == "sample" else None}))
    _write(args, "".join(x + "\n" for x in lines))


def cmd_eval_reconstruction(args):
    vocab = C.Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint, vocab.hash)
    test = TrainingSet.load(args.data)
    gen = _gen_cfg(args)
    dataset = args.dataset or Path(args.data).stem
    scores = evaluate_reconstruction(params, test, gen, args.n_trials, args.seed or 0, dataset)
    rows = [ReportRow.from_stats(scores[m], experiment="eval", dataset=dataset,
                                 target_model=args.target_model, attack_size=args.attack_size or f"h{params.hidden}",
                                 metric=m) for m in ("bleu1", "rouge1", "bleu1_beam", "rouge1_beam")]
    mark_significance(rows)
    _write(args, rows_to_csv(rows))


def cmd_eval_attribute(args):
    cfgd = _config(args)
    cfg = ExperimentConfig.from_dict(cfgd, Path(args.config).parent) if args.config else None
    if cfg is None:
        raise UsageError("eval-attribute needs --config (decoder, target and proxies)")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir_given:
        cfg.out_dir = str(Path(args.out_dir).resolve())
    rows = run_attribute_eval(cfg, args.tasks or cfg.task_files)
    mark_significance(rows)
    _write(args, rows_to_csv(rows))


def cmd_corpus_sim(args):
    corpora = [C.read_text_units(p, not args.document) for p in args.corpora]
    ref_path = args.reference or args.corpora[0]
    cache = _out(args, "cache", f"features-{Path(ref_path).stem}-k{args.k}.txt")
    if cache.exists():
        fs = FeatureSet.load(cache)
    else:
        fs = build_feature_set(C.read_text_units(ref_path, not args.document), args.k, Path(ref_path).name)
        fs.save(cache)
    m = similarity_matrix(corpora, fs)
    names = [Path(p).stem for p in args.corpora]
    rows = [[""] + names] + [[n] + [repr(float(x)) for x in row] for n, row in zip(names, m)]
    _write(args, "".join(",".join(r) + "\n" for r in rows))


def cmd_run(args):
    if not args.config:
        raise UsageError("run needs --config")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir_given:
        cfg.out_dir = str(Path(args.out_dir).resolve())
    if args.jobs is not None:
        cfg.jobs = args.jobs
    rows = run(cfg, args.experiment)
    for r in rows:
        print(f"{r.experiment:16s} {r.dataset:18s} {r.target_model:20s} {r.attack_size:6s} "
              f"{r.train_size:6s} {r.level:10s} {r.metric:12s} {r.mean:.4f} ± {r.stderr:.4f}{r.significance}")


def cmd_report(args):
    rows = []
    for p in args.inputs:
        rows += rows_from_json(Path(p).read_text(encoding="utf-8"))
    mark_significance(rows)
    fmts = ["csv"] + (["json"] if args.json else []) + (["dat"] if args.dat else [])
    for p in emit_report(rows, args.out_dir, args.name, fmts):
        print(p)


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_opts(p, suppress):
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p.add_argument("--config", default=d(None), help="JSON config (ExperimentConfig field names)")
        p.add_argument("--seed", type=int, default=d(None), help="master seed")
        p.add_argument("--out-dir", default=d("out"))
        p.add_argument("--jobs", type=int, default=d(None))
        p.add_argument("-v", "--verbose", action="store_true", default=d(False))

    # global flags are accepted before or after the subcommand
    shared = argparse.ArgumentParser(add_help=False)
    global_opts(shared, suppress=True)
    ap = _Parser(prog="embinvert", description="Embedding inversion privacy toolkit")
    global_opts(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, **kw):
        return sub.add_parser(name, parents=[shared], **kw)

    def corpus_opts(p):
        p.add_argument("--document", action="store_true", help="segment whole documents instead of one sentence per line")
        p.add_argument("--min-len", type=int, default=4)
        p.add_argument("--max-len", type=int, default=64)

    def emb_opts(p):
        p.add_argument("--kind", choices=["hashed_bag", "positional_mix", "remote"])
        p.add_argument("--dim", type=int)
        p.add_argument("--embed-seed", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--min-query-tokens", type=int)
        p.add_argument("--endpoint")

    def gen_opts(p):
        p.add_argument("--beam-width", type=int)
        p.add_argument("--max-len", type=int)
        p.add_argument("--temperature", type=float)

    p = command("segment", help="split a document into sentences")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_segment)

    p = command("build-vocab")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--max-size", type=int, default=50_000)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--document", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_build_vocab)

    p = command("stats")
    p.add_argument("corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--encode", help="also write the encoded corpus here")
    corpus_opts(p)
    p.set_defaults(fn=cmd_stats)

    p = command("embed")
    p.add_argument("input")
    p.add_argument("--document", action="store_true")
    p.add_argument("--cache", action="store_true")
    p.add_argument("-o", "--output")
    emb_opts(p)
    p.set_defaults(fn=cmd_embed)

    p = command("make-trainset")
    p.add_argument("corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--split", help="train,val,test fractions, e.g. 0.8,0.1,0.1")
    p.add_argument("-o", "--output")
    corpus_opts(p)
    emb_opts(p)
    p.set_defaults(fn=cmd_make_trainset)

    p = command("train")
    p.add_argument("trainset")
    p.add_argument("--vocab", required=True)
    p.add_argument("--validation")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--resume", help="continue training from this checkpoint")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_train)

    p = command("decode")
    p.add_argument("checkpoint")
    p.add_argument("--vocab", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trainset")
    src.add_argument("--embeddings", help="JSON lines with an 'embedding' field (output of embed)")
    p.add_argument("--mode", choices=["beam", "greedy", "sample"], default="beam")
    p.add_argument("-o", "--output")
    gen_opts(p)
    p.set_defaults(fn=cmd_decode)

    p = command("eval-reconstruction")
    p.add_argument("checkpoint")
    p.add_argument("--vocab", required=True)
    p.add_argument("--data", required=True, help="training-set file with the test pairs")
    p.add_argument("--n-trials", type=int, default=10)
    p.add_argument("--dataset")
    p.add_argument("--target-model", default="")
    p.add_argument("--attack-size")
    p.add_argument("-o", "--output")
    gen_opts(p)
    p.set_defaults(fn=cmd_eval_reconstruction)

    p = command("eval-attribute")
    p.add_argument("tasks", nargs="*")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_eval_attribute)

    p = command("corpus-sim")
    p.add_argument("corpora", nargs="+")
    p.add_argument("--reference")
    p.add_argument("--k", type=int, default=5000)
    p.add_argument("--document", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_corpus_sim)

    p = command("run")
    p.add_argument("experiment", choices=list(EXPERIMENTS) + ["all"])
    p.set_defaults(fn=cmd_run)

    p = command("report", help="re-render JSON reports")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--name", default="report")
    p.add_argument("--json", action="store_true")
    p.add_argument("--dat", action="store_true")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # usage errors exit 1, --help exits 0
        return int(exc.code or 0)
    args.out_dir_given = any(a == "--out-dir" or a.startswith("--out-dir=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except UsageError as exc:
        print(f"embinvert: {exc}", file=sys.stderr)
        return 1
    except EmbInvertError as exc:
        print(f"embinvert: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"embinvert: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
