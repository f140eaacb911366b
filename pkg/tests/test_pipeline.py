import json
import warnings

import numpy as np
import pytest

from embinvert.errors import EmptyBucket, IoFailure
from embinvert.pipeline import synth
from embinvert.pipeline.config import ExperimentConfig
from embinvert.pipeline.experiments import (
    Workspace, copy_reconstructor, derive_seed, evaluate_reconstruction, length_buckets, run,
    run_attribute_eval, run_few_shot, run_in_distribution, run_length_study, run_ood,
)
from embinvert.pipeline.report import (
    COLUMNS, ReportRow, emit_report, mark_significance, rows_from_json, rows_to_csv,
)

from conftest import CONFIGS, FIXTURES, GOLDEN


def small_cfg(tmp_path, **over) -> ExperimentConfig:
    f = lambda name: str(FIXTURES / name)
    d = dict(
        name="t", train_corpus=f("synth-A-heldout.txt"),
        eval_corpora=[{"name": "news", "path": f("synth-news.txt")},
                      {"name": "clinic", "path": f("synth-clinic.txt")}],
        few_shot_corpus="news", length_corpus=f("synth-long.txt"),
        task_files=[f("occupation_task.json")],
        target={"label": "pm16", "kind": "positional_mix", "dim": 16, "seed": 7, "min_query_tokens": 3},
        hidden_sizes=[16], embed_width=8, context_window=2, train_sizes=[150],
        eval_size=30, val_size=30, train={"learning_rate": 0.01, "epochs": 2, "batch_size": 32},
        gen={"beam_width": 2, "max_len": 20, "temperature": 0.7}, n_trials=2,
        few_shot_sizes=[0, 40], length_buckets=[[8, 12], [20, 28]], feature_k=200,
        out_dir=str(tmp_path / "out"), seed=0, jobs=1,
    )
    d.update(over)
    return ExperimentConfig.from_dict(d)


# -- config ------------------------------------------------------------------------

def test_config_files_load():
    for name in ("acceptance", "expressivity", "smoke"):
        cfg = ExperimentConfig.load(CONFIGS / f"{name}.json")
        assert all(p.startswith("/") for p in cfg.all_corpus_paths())
        assert cfg.n_trials >= 1


def test_config_rejects_unknown_keys_and_bad_trials(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"nonsense": 1})
    with pytest.raises(ValueError):
        small_cfg(tmp_path, n_trials=0)


def test_missing_paths_fail_at_run_time(tmp_path):
    cfg = small_cfg(tmp_path, train_corpus=str(tmp_path / "nope.txt"))
    with pytest.raises(FileNotFoundError):
        Workspace(cfg)


def test_proxy_defaults_to_ungated_target(tmp_path):
    cfg = small_cfg(tmp_path)
    (proxy,) = cfg.proxy_embedders
    assert proxy.cfg == cfg.target_embedder.cfg.replace(min_query_tokens=0)


def test_seed_derivation_unique():
    seeds = {derive_seed(0, "eval", d, t) for d in ("a", "b", "c") for t in range(100)}
    assert len(seeds) == 300
    assert derive_seed(1, "eval", "a", 0) != derive_seed(0, "eval", "a", 0)
    assert derive_seed(0, "x") == derive_seed(0, "x")


# -- experiments -------------------------------------------------------------------

def test_smoke_config_completes(tmp_path):
    cfg = ExperimentConfig.load(CONFIGS / "smoke.json")
    cfg.out_dir = str(tmp_path)
    rows = run(cfg, "in_distribution")
    assert len(rows) >= 2
    assert (tmp_path / "reports" / "smoke-in_distribution.csv").exists()


def test_smoke_training_halves_loss(tmp_path):
    from embinvert.decoder import TrainConfig, init_params, train
    cfg = ExperimentConfig.load(CONFIGS / "smoke.json")
    cfg.out_dir = str(tmp_path)
    ws = Workspace(cfg)
    _, pool, _, _ = ws.train_split()
    named = cfg.target_embedder
    assert named.cfg.dim == 64
    ts = ws.pairs(pool[:200], named)
    _, hist = train(ws.fresh_params(named, cfg.hidden_sizes[0]), ts, cfg.train)
    assert cfg.train.epochs == 30 and len(ts) == 200
    assert hist.train_loss[-1] <= 0.5 * hist.train_loss[0]
    # below the uniform-model baseline of log|V| per token
    per_token = hist.train_loss[-1] / np.mean([len(p.target_tokens) for p in ts.pairs])
    assert per_token < np.log(ws.vocab.size)


def test_in_distribution_rows_and_determinism(tmp_path):
    cfg = small_cfg(tmp_path, train_sizes=[0, 150])
    a = run_in_distribution(cfg)
    b = run_in_distribution(small_cfg(tmp_path / "again", train_sizes=[0, 150]))
    assert rows_to_csv(a) == rows_to_csv(b)
    assert {r.train_size for r in a} == {"0", "150"}
    assert {r.metric for r in a} == {"bleu1", "rouge1", "bleu1_beam", "rouge1_beam"}
    sampled = [r for r in a if r.metric == "bleu1"]
    assert all(r.n_trials == 2 for r in sampled)


def test_checkpoint_store_reused(tmp_path):
    cfg = small_cfg(tmp_path)
    first = run_in_distribution(cfg)
    ckpts = sorted((tmp_path / "out" / "checkpoints").glob("*.ckpt"))
    assert len(ckpts) == 1
    mtime = ckpts[0].stat().st_mtime_ns
    second = run_in_distribution(cfg)
    assert ckpts[0].stat().st_mtime_ns == mtime
    assert rows_to_csv(first) == rows_to_csv(second)


def test_cache_soundness(tmp_path):
    on = run_in_distribution(small_cfg(tmp_path / "on", cache=True))
    off = run_in_distribution(small_cfg(tmp_path / "off", cache=False))
    assert rows_to_csv(on) == rows_to_csv(off)


def test_parallel_cells_match_serial(tmp_path):
    kw = dict(train_sizes=[0, 100, 150], hidden_sizes=[8, 16])
    serial = run_in_distribution(small_cfg(tmp_path / "s", jobs=1, **kw))
    parallel = run_in_distribution(small_cfg(tmp_path / "p", jobs=4, **kw))
    assert rows_to_csv(serial) == rows_to_csv(parallel)


def test_ood_similarity_rows(tmp_path):
    cfg = small_cfg(tmp_path, few_shot_corpus=None, eval_corpora=[
        {"name": "heldout", "path": str(FIXTURES / "synth-A.txt")},
        {"name": "clinic", "path": str(FIXTURES / "synth-clinic.txt")}])
    rows = run_ood(cfg)
    sim = {r.dataset: r.mean for r in rows if r.metric == "similarity"}
    assert sim["heldout"] > sim["clinic"]
    bleu = {r.dataset: r.mean for r in rows if r.metric == "bleu1_beam"}
    assert bleu["heldout"] >= bleu["clinic"]


def test_disjoint_corpus_at_unk_floor(tmp_path):
    # the clinic vocabulary never appears in the training text, so any decoder scores the floor
    cfg = small_cfg(tmp_path, few_shot_corpus=None, eval_corpora=[{"name": "clinic", "path": str(FIXTURES / "synth-clinic.txt")}])
    ws = Workspace(cfg)
    named = cfg.target_embedder
    test = ws.pairs(ws.sentences(str(FIXTURES / "synth-clinic.txt"))[:30], named)
    trained = evaluate_reconstruction(ws.main_decoder(named, 16), test, cfg.gen, 2, 0, "clinic")
    untrained = evaluate_reconstruction(ws.fresh_params(named, 16), test, cfg.gen, 2, 0, "clinic")
    assert abs(trained["bleu1_beam"].mean - untrained["bleu1_beam"].mean) <= 0.02
    assert trained["bleu1_beam"].mean <= 0.02


def test_few_shot_size_zero_equals_ood_row(tmp_path):
    cfg = small_cfg(tmp_path, few_shot_sizes=[0])
    ws = Workspace(cfg)
    fs = run_few_shot(cfg, ws)
    ood = [r for r in run_ood(cfg, ws) if r.dataset == "news" and r.metric != "similarity"]
    key = lambda r: (r.metric, r.mean, r.stderr, r.trials)
    assert sorted(map(key, fs)) == sorted(map(key, ood))


def test_few_shot_deterministic(tmp_path):
    a = run_few_shot(small_cfg(tmp_path / "a"))
    b = run_few_shot(small_cfg(tmp_path / "b"))
    assert rows_to_csv(a) == rows_to_csv(b)
    assert [r.level for r in a if r.metric == "bleu1"] == ["0", "40"]


def test_few_shot_too_large(tmp_path):
    with pytest.raises(ValueError):
        run_few_shot(small_cfg(tmp_path, few_shot_sizes=[10**6]))


def test_length_buckets_identical_contents_identical_scores(tmp_path):
    rows = run_length_study(small_cfg(tmp_path, length_buckets=[[8, 12], [8, 12]]))
    first, second = rows[:4], rows[4:]
    assert [(r.metric, r.mean, r.trials) for r in first] == [(r.metric, r.mean, r.trials) for r in second]


def test_empty_bucket(tmp_path):
    with pytest.raises(EmptyBucket):
        run_length_study(small_cfg(tmp_path, length_buckets=[[8, 12], [500, 600]]))
    with pytest.raises(EmptyBucket):
        length_buckets([], [[1, 2]])


def test_attribute_copy_stub_matches_direct(tmp_path):
    cfg = small_cfg(tmp_path)
    rows = run_attribute_eval(cfg, reconstructor=copy_reconstructor)
    recon = next(r for r in rows if r.level == "reconstructed")
    direct = next(r for r in rows if r.level == "direct")
    assert recon.mean == direct.mean and recon.stderr == 0.0
    assert direct.attack_size == "none"


def test_attribute_deterministic(tmp_path):
    a = run_attribute_eval(small_cfg(tmp_path / "a"))
    b = run_attribute_eval(small_cfg(tmp_path / "b"))
    assert rows_to_csv(a) == rows_to_csv(b)


def test_run_all_and_unknown(tmp_path):
    with pytest.raises(ValueError):
        run(small_cfg(tmp_path), "nope")
    rows = run(small_cfg(tmp_path), "all")
    assert {r.experiment for r in rows} == {"in_distribution", "ood", "few_shot", "length", "attribute"}
    out = tmp_path / "out"
    assert (out / "reports" / "t-all.csv").exists() and (out / "reports" / "t-all.json").exists()
    assert (out / "plots" / "t-all_similarity.dat").exists() and (out / "plots" / "t-all_few_shot.dat").exists()
    assert (out / "cache" / "embeddings.json").exists()


# -- reports -------------------------------------------------------------------------

def _golden_rows():
    return rows_from_json((GOLDEN / "report_rows.json").read_text())


def test_report_golden_csv(tmp_path):
    emit_report(_golden_rows(), tmp_path, "g")
    assert (tmp_path / "reports" / "g.csv").read_bytes() == (GOLDEN / "report.csv").read_bytes()


def test_empty_report_header_only(tmp_path):
    emit_report([], tmp_path, "empty")
    assert (tmp_path / "reports" / "empty.csv").read_text() == ",".join(COLUMNS) + "\n"


def test_json_and_csv_agree(tmp_path):
    emit_report(_golden_rows(), tmp_path, "g")
    import csv
    with open(tmp_path / "reports" / "g.csv") as fh:
        from_csv = list(csv.DictReader(fh))
    from_json = json.loads((tmp_path / "reports" / "g.json").read_text())
    for c, j in zip(from_csv, from_json):
        for col in COLUMNS:
            assert c[col] == (repr(j[col]) if isinstance(j[col], float) else str(j[col]))


def test_report_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        emit_report([], blocker, "r")


def _row(size, trials):
    return ReportRow.from_stats(
        __import__("embinvert.metrics", fromlist=["aggregate_trials"]).aggregate_trials(trials),
        experiment="e", dataset="d", target_model="m", attack_size=size, metric="bleu1")


def test_significance_star():
    big = _row("h128", [0.80, 0.81, 0.79, 0.80])
    small = _row("h32", [0.50, 0.52, 0.49, 0.51])
    mark_significance([big, small])
    assert big.significance == "*" and small.significance == ""


def test_no_star_when_not_significant():
    a = _row("h128", [0.5, 0.9, 0.1, 0.6])
    b = _row("h32", [0.4, 0.8, 0.2, 0.5])
    mark_significance([a, b])
    assert a.significance == b.significance == ""


# -- synthetic corpora -----------------------------------------------------------------

def test_synth_generator_deterministic():
    assert synth.generate("bio", 20, 1) == synth.generate("bio", 20, 1)
    assert synth.generate("bio", 20, 1) != synth.generate("bio", 20, 2)


def test_clinic_vocabulary_disjoint_from_bio():
    from embinvert.corpus import tokenize
    bio = {t for s in synth.generate("bio", 3000, 1) for t in tokenize(s)}
    clinic = {t for s in synth.generate("clinic", 3000, 1) for t in tokenize(s)}
    assert not bio & clinic


def test_fixtures_match_generator():
    lines = (FIXTURES / "synth-A-heldout.txt").read_text().splitlines()
    assert lines == synth.generate("bio", 600, 2)
