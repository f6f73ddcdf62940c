import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textstyle import textenc
from textstyle.corpus import CorpusSample
from textstyle.errors import ValidationError


# ---------------------------------------------------------------------------
# tokenize


def test_tokenize_drops_punctuation_and_digits():
    assert textenc.tokenize("The Starry Night, 1889!") == ["the", "starry", "night"]


def test_tokenize_empty():
    assert textenc.tokenize("") == []


def test_tokenize_splits_on_hyphens():
    assert textenc.tokenize("oil-on-canvas") == ["oil", "on", "canvas"]


def test_tokenize_digits_inside_words_split():
    assert textenc.tokenize("abc123def") == ["abc", "def"]


# ---------------------------------------------------------------------------
# vocabulary


def test_threshold_boundary_keeps_tokens_at_exactly_min_count():
    texts = ["blue sky"] * 10
    vocab = textenc.build_vocabulary(texts, min_count=10)
    assert sorted(vocab.tokens) == ["blue", "sky"]


def test_document_frequency_counts_texts_not_occurrences():
    vocab = textenc.build_vocabulary(["a b", "b c"], min_count=1)
    assert set(vocab.tokens) == {"a", "b", "c"}
    df = {t: vocab.document_frequency[vocab.index[t]] for t in vocab.tokens}
    assert df == {"a": 1, "b": 2, "c": 1}


def test_counts_match_independent_counting_script():
    rng = np.random.default_rng(12)
    words = [f"w{c}" for c in "abcdefghijklmnop"]
    texts = [
        " ".join(rng.choice(words, size=rng.integers(1, 12)))
        for _ in range(200)
    ]
    # independent one-pass count (not via the module's tokenizer)
    occurrences = Counter()
    doc_freq = Counter()
    for text in texts:
        toks = text.split()
        occurrences.update(toks)
        doc_freq.update(set(toks))
    vocab = textenc.build_vocabulary(texts, min_count=5)
    expected_tokens = sorted(t for t, n in occurrences.items() if n >= 5)
    assert vocab.tokens == expected_tokens
    for t in vocab.tokens:
        assert vocab.document_frequency[vocab.index[t]] == doc_freq[t]
    assert vocab.total_documents == 200


def test_empty_vocabulary_rejected():
    with pytest.raises(ValidationError):
        textenc.build_vocabulary(["rare words only"], min_count=10)
    with pytest.raises(ValidationError):
        textenc.build_vocabulary([], min_count=1)


# ---------------------------------------------------------------------------
# encode


def two_token_vocab():
    # vocab {a: df 1, b: df 2}, N=2
    return textenc.build_vocabulary(["a b", "b"], min_count=1)


def test_all_oov_text_encodes_to_zero():
    vocab = two_token_vocab()
    vec = textenc.encode("unknown words only", vocab)
    assert vec.weights == {}
    assert np.all(vec.to_dense() == 0.0)


def test_single_token_is_one_hot():
    vocab = two_token_vocab()
    vec = textenc.encode("b b b", vocab)
    dense = vec.to_dense()
    assert dense[vocab.index["b"]] == pytest.approx(1.0)
    assert dense[vocab.index["a"]] == 0.0


def test_encode_matches_formula_evaluated_independently():
    vocab = two_token_vocab()
    vec = textenc.encode("a a b", vocab).to_dense()
    # independent evaluation of tf * (ln((1+N)/(1+df)) + 1), then L2 norm
    w_a = 2.0 * (math.log((1 + 2) / (1 + 1)) + 1.0)
    w_b = 1.0 * (math.log((1 + 2) / (1 + 2)) + 1.0)
    assert w_a == pytest.approx(2.8109302162163288)
    norm = math.sqrt(w_a * w_a + w_b * w_b)
    assert vec[vocab.index["a"]] == pytest.approx(w_a / norm, abs=1e-12)
    assert vec[vocab.index["b"]] == pytest.approx(w_b / norm, abs=1e-12)


def test_nonzero_encoding_has_unit_norm():
    vocab = two_token_vocab()
    dense = textenc.encode("a b b a a", vocab).to_dense()
    assert abs(np.linalg.norm(dense) - 1.0) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["red", "blue", "sun", "sea", "tree"]),
                min_size=1, max_size=12),
       st.integers(min_value=2, max_value=5))
def test_repetition_leaves_direction_unchanged(words, k):
    vocab = textenc.build_vocabulary(
        ["red blue sun", "sea tree red", "blue sun sea tree"], min_count=1
    )
    text = " ".join(words)
    once = textenc.encode(text, vocab).to_dense()
    repeated = textenc.encode(" ".join([text] * k), vocab).to_dense()
    assert np.max(np.abs(once - repeated)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.permutations(["red", "blue", "sun", "sea", "red", "blue"]))
def test_encoding_independent_of_token_order(words):
    vocab = textenc.build_vocabulary(
        ["red blue sun", "sea tree red", "blue sun sea tree"], min_count=1
    )
    base = textenc.encode("red blue sun sea red blue", vocab).to_dense()
    shuffled = textenc.encode(" ".join(words), vocab).to_dense()
    assert np.array_equal(base, shuffled)


# ---------------------------------------------------------------------------
# combined encoder + persistence


def make_corpus_samples():
    return [
        CorpusSample("1", "p", "storm at sea", "dark waves crash over the pier", {}),
        CorpusSample("2", "p", "calm sea", "gentle waves in morning light", {}),
        CorpusSample("3", "p", "sea cliffs", "waves strike the tall cliffs", {}),
    ]


def test_combined_encoding_is_unit_norm_and_concatenated():
    model = textenc.build_text_encoder(make_corpus_samples(), min_count=1)
    vec = model.encode_pair("calm sea", "gentle waves")
    assert vec.shape == (model.dimension,)
    assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9
    # title tokens land strictly in the title block
    comment_dim = model.comment_vocab.size
    title_only = model.encode_pair("calm sea", "")
    assert np.all(title_only[:comment_dim] == 0.0)
    assert np.any(title_only[comment_dim:] != 0.0)


def test_encoder_json_roundtrip_preserves_fingerprint(tmp_path):
    model = textenc.build_text_encoder(make_corpus_samples(), min_count=1)
    path = tmp_path / "vocab.json"
    textenc.save_text_encoder(model, path)
    loaded = textenc.load_text_encoder(path)
    assert textenc.fingerprint(loaded) == textenc.fingerprint(model)
    assert loaded.comment_vocab.tokens == model.comment_vocab.tokens
    assert loaded.title_vocab.document_frequency == model.title_vocab.document_frequency
    text = "waves over the cliffs"
    assert np.array_equal(loaded.encode_pair("sea", text), model.encode_pair("sea", text))


def test_fingerprint_changes_with_vocabulary():
    model_a = textenc.build_text_encoder(make_corpus_samples(), min_count=1)
    model_b = textenc.build_text_encoder(make_corpus_samples()[:2], min_count=1)
    assert textenc.fingerprint(model_a) != textenc.fingerprint(model_b)
