"""tf-idf text encoding over corpus-built comment and title vocabularies.

Tokens are lowercase ASCII letter runs; everything else separates. A
vocabulary keeps tokens whose total occurrence count in the training
texts reaches ``min_count`` (default 10). Encoding weights each token by
tf * (ln((1 + N) / (1 + df)) + 1) and L2-normalizes; out-of-vocabulary
tokens are ignored and an all-OOV text encodes to the zero vector.

A sample's combined encoding is [comment vector ; title vector],
re-normalized.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_TOKEN = re.compile(r"[a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into purely alphabetic tokens."""
    return _TOKEN.findall(text.lower())


@dataclass
class TfIdfVocabulary:
    tokens: list[str]                # index -> token, sorted, dense 0..V-1
    index: dict[str, int]            # token -> index
    document_frequency: list[int]    # index -> number of texts containing token
    total_documents: int
    min_count: int

    @property
    def size(self) -> int:
        return len(self.tokens)

    def idf(self, token_index: int) -> float:
        df = self.document_frequency[token_index]
        return math.log((1.0 + self.total_documents) / (1.0 + df)) + 1.0


@dataclass
class TextVector:
    """Sparse L2-normalized tf-idf encoding over one vocabulary."""

    weights: dict[int, float]
    dimension: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension)
        for i, w in self.weights.items():
            dense[i] = w
        return dense


def build_vocabulary(train_texts: list[str], min_count: int = 10) -> TfIdfVocabulary:
    """Count tokens over the training texts and keep the frequent ones.

    ``min_count`` applies to total occurrences (not document count);
    document frequency is tracked separately for the idf term.
    """
    if not train_texts:
        raise ValidationError("cannot build a vocabulary from an empty text list")
    occurrences: Counter[str] = Counter()
    doc_freq: Counter[str] = Counter()
    for text in train_texts:
        toks = tokenize(text)
        occurrences.update(toks)
        doc_freq.update(set(toks))
    kept = sorted(t for t, n in occurrences.items() if n >= min_count)
    if not kept:
        raise ValidationError(
            f"no token reaches min_count={min_count} over {len(train_texts)} texts"
        )
    return TfIdfVocabulary(
        tokens=kept,
        index={t: i for i, t in enumerate(kept)},
        document_frequency=[doc_freq[t] for t in kept],
        total_documents=len(train_texts),
        min_count=min_count,
    )


def encode(text: str, vocab: TfIdfVocabulary) -> TextVector:
    """Encode one text as an L2-normalized tf-idf vector over ``vocab``."""
    counts = Counter(tokenize(text))
    weights = {
        vocab.index[t]: float(n) * vocab.idf(vocab.index[t])
        for t, n in counts.items()
        if t in vocab.index
    }
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm > 0.0:
        weights = {i: w / norm for i, w in weights.items()}
    return TextVector(weights, vocab.size)


@dataclass
class TextEncoderModel:
    """Comment + title vocabularies with the combined-encoding rule."""

    comment_vocab: TfIdfVocabulary
    title_vocab: TfIdfVocabulary

    @property
    def dimension(self) -> int:
        return self.comment_vocab.size + self.title_vocab.size

    def encode_pair(self, title: str, comment: str) -> np.ndarray:
        """Dense [comment ; title] concatenation, re-normalized if nonzero."""
        vec = np.concatenate([
            encode(comment, self.comment_vocab).to_dense(),
            encode(title, self.title_vocab).to_dense(),
        ])
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


def build_text_encoder(samples, min_count: int = 10) -> TextEncoderModel:
    """Build both vocabularies from a training split of corpus samples."""
    return TextEncoderModel(
        comment_vocab=build_vocabulary([s.comment for s in samples], min_count),
        title_vocab=build_vocabulary([s.title for s in samples], min_count),
    )


# ---------------------------------------------------------------------------
# persistence


def _vocab_to_obj(v: TfIdfVocabulary) -> dict:
    return {
        "tokens": v.tokens,
        "document_frequency": v.document_frequency,
        "total_documents": v.total_documents,
        "min_count": v.min_count,
    }


def _vocab_from_obj(obj: dict) -> TfIdfVocabulary:
    tokens = list(obj["tokens"])
    return TfIdfVocabulary(
        tokens=tokens,
        index={t: i for i, t in enumerate(tokens)},
        document_frequency=list(obj["document_frequency"]),
        total_documents=int(obj["total_documents"]),
        min_count=int(obj["min_count"]),
    )


def encoder_to_json_bytes(model: TextEncoderModel) -> bytes:
    """Canonical JSON serialization (sorted keys, compact separators)."""
    obj = {
        "comment": _vocab_to_obj(model.comment_vocab),
        "title": _vocab_to_obj(model.title_vocab),
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def fingerprint(model: TextEncoderModel) -> bytes:
    """32-byte SHA-256 of the canonical vocabulary serialization."""
    return hashlib.sha256(encoder_to_json_bytes(model)).digest()


def save_text_encoder(model: TextEncoderModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encoder_to_json_bytes(model))


def load_text_encoder(path) -> TextEncoderModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return TextEncoderModel(
            comment_vocab=_vocab_from_obj(obj["comment"]),
            title_vocab=_vocab_from_obj(obj["title"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed vocabulary file {path}: {exc}") from exc
