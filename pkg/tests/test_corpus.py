import json
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from embinvert.corpus import (
    BOS, EOS, N_SPECIAL, PAD, UNK, Sentence, Vocabulary, build_vocab, corpus_stats,
    filter_and_encode, load_corpus, read_encoded, read_text_units, segment, tokenize,
    write_encoded,
)
from embinvert.errors import VocabMismatch

from conftest import FIXTURES, GOLDEN


# -- segmentation --------------------------------------------------------------

def test_segment_two_terminal_marks():
    assert segment("A b. C d!") == ["A b.", "C d!"]


def test_segment_empty():
    assert segment("") == []
    assert segment("   \n ") == []


def test_segment_abbreviation_golden():
    assert segment("Dr. Smith arrived. He left.") == ["Dr. Smith arrived.", "He left."]


def test_segment_initials_and_tail():
    assert segment("J. Smith won. Then") == ["J. Smith won.", "Then"]


def test_segment_keeps_closing_quote_with_sentence():
    assert segment('He said "stop." She did.') == ['He said "stop."', "She did."]


def test_segment_decimal_is_not_a_boundary():
    assert segment("Pi is 3.14 today. Yes.") == ["Pi is 3.14 today.", "Yes."]


_text = st.text(alphabet=st.sampled_from(list("ab .!?\n\"'Dr")), max_size=60)


@given(_text)
def test_segment_conserves_non_whitespace(raw):
    out = segment(raw)
    strip = lambda s: "".join(s.split())
    assert strip("".join(out)) == strip(raw)
    assert all(piece == piece.strip() and piece for piece in out)


# -- tokenization --------------------------------------------------------------

@pytest.mark.parametrize("text, expected", [
    ("David is a doctor.", ["david", "is", "a", "doctor", "."]),
    ("re-entry", ["re", "-", "entry"]),
    ("  ", []),
    ("Hello, World!", ["hello", ",", "world", "!"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_tokenize_can_keep_case():
    assert tokenize("Hi There", lowercase=False) == ["Hi", "There"]


# -- vocabulary -----------------------------------------------------------------

def test_vocab_small_corpus():
    v = build_vocab([["a", "a", "b"]], max_size=6)
    assert set(v.content_tokens) == {"a", "b"}
    assert v.size == 6
    assert v.id_to_token[:N_SPECIAL] == ("<pad>", "<bos>", "<eos>", "<unk>")


def test_vocab_min_freq():
    v = build_vocab([["a", "a", "b"]], max_size=6, min_freq=2)
    assert v.content_tokens == ("a",)


def test_vocab_ties_lexicographic():
    v = build_vocab([["c", "b", "a", "b", "c"]], max_size=6)
    assert v.content_tokens == ("b", "c")


def test_vocab_truncation_against_counter():
    import random
    rng = random.Random(3)
    words = [f"w{i}" for i in range(400)]
    weights = [1 / (i + 1) for i in range(400)]
    sents = [rng.choices(words, weights, k=rng.randint(4, 12)) for _ in range(1000)]
    v = build_vocab(sents, max_size=200)
    assert v.size == 200
    counts = Counter(t for s in sents for t in s)
    mode = max(sorted(counts), key=lambda t: counts[t])
    assert v.id_to_token[N_SPECIAL] == mode
    kept = set(v.content_tokens)
    dropped = set(counts) - kept
    assert min(counts[t] for t in kept) >= max(counts[t] for t in dropped)


def test_vocab_rejects_tiny_max_size():
    with pytest.raises(ValueError):
        build_vocab([["a"]], max_size=3)


@given(st.lists(st.lists(st.sampled_from(list("abcdefgh")), max_size=6), max_size=20),
       st.integers(4, 12))
def test_vocab_invariants(sents, max_size):
    v = build_vocab(sents, max_size=max_size)
    assert v.size >= 4
    for i, tok in enumerate(v.id_to_token):
        assert v.token_to_id[tok] == i
    assert all(v.token_to_id[t] >= N_SPECIAL for t in v.content_tokens)


def test_vocab_save_load(tmp_path):
    v = build_vocab([["x", "y", "y"]])
    v.save(tmp_path / "v.txt")
    assert (tmp_path / "v.txt").read_text().splitlines() == ["y", "x"]
    w = Vocabulary.load(tmp_path / "v.txt")
    assert w == v and w.hash == v.hash


# -- encoding and stats ---------------------------------------------------------

@pytest.fixture
def vocab():
    return build_vocab([tokenize("david is a doctor .")])


def test_encode_full_vocab(vocab):
    (s,) = filter_and_encode(["David is a doctor."], vocab)
    assert vocab.decode(s.tokens) == ["david", "is", "a", "doctor", "."]
    assert UNK not in s.tokens


def test_short_sentence_dropped(vocab):
    assert filter_and_encode(["a doctor"], vocab, min_len=4) == []


def test_long_sentence_dropped(vocab):
    assert filter_and_encode(["a " * 10], vocab, max_len=9) == []


def test_unseen_token_is_unk(vocab):
    (s,) = filter_and_encode(["david is a lawyer ."], vocab)
    assert s.tokens[3] == UNK == 3


@given(st.lists(st.text(alphabet="abc xyz.,", max_size=40), max_size=15))
def test_encode_decode_identity(texts):
    vocab = build_vocab([tokenize(t) for t in texts[::2]])
    for s in filter_and_encode(texts, vocab, min_len=1, max_len=64):
        expected = [t if t in vocab.token_to_id else "<unk>" for t in tokenize(s.surface)]
        assert vocab.decode(s.tokens) == expected
        assert all(t not in (PAD, BOS, EOS) for t in s.tokens)


def test_stats_examples():
    mk = lambda n: Sentence("", tuple([5] * n))
    st_ = corpus_stats([mk(4), mk(6)])
    assert st_.avg_len == 5.0 and st_.n_sentences == 2 and st_.vocab_coverage == 1.0
    assert corpus_stats([]).n_sentences == 0


def test_stats_coverage_counts_unk():
    assert corpus_stats([Sentence("", (5, UNK, 6, UNK))]).vocab_coverage == 0.5


def test_synth_a_stats_golden():
    golden = json.loads((GOLDEN / "synth-A-stats.json").read_text())
    texts = read_text_units(FIXTURES / "synth-A.txt")
    vocab = build_vocab(tokenize(t) for t in texts)
    s = corpus_stats(load_corpus(FIXTURES / "synth-A.txt", vocab))
    assert s.n_sentences == golden["n_sentences"]
    assert s.avg_len == pytest.approx(golden["avg_len"], abs=1e-12)
    assert s.vocab_coverage == golden["vocab_coverage"]


def test_read_text_units_document_mode(tmp_path):
    p = tmp_path / "doc.txt"
    p.write_text("One two. Three\nfour!")
    assert read_text_units(p, per_line=False) == ["One two.", "Three\nfour!"]
    assert read_text_units(p) == ["One two. Three", "four!"]


def test_encoded_roundtrip(tmp_path, vocab):
    sents = filter_and_encode(["david is a doctor .", "a doctor is david ."], vocab, source_tag="t")
    write_encoded(tmp_path / "c.jsonl", sents, vocab)
    assert read_encoded(tmp_path / "c.jsonl", vocab) == sents
    other = build_vocab([["zzz"]])
    with pytest.raises(VocabMismatch):
        read_encoded(tmp_path / "c.jsonl", other)


def test_encoding_is_byte_deterministic(tmp_path, vocab):
    sents = filter_and_encode(["david is a doctor ."] * 3, vocab)
    write_encoded(tmp_path / "a", sents, vocab)
    write_encoded(tmp_path / "b", sents, vocab)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
