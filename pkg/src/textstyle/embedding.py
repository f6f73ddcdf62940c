"""Joint text-image embedding: projection heads, margin loss, retrieval.

Both modalities are projected to the same dimensionality (128 by
default) by a linear layer + tanh + L2 normalization. Training minimizes
a piecewise cosine-margin loss: matched pairs pay 1 - cos, mismatched
pairs pay max(0, cos - m), averaged over the B positives and the
B*(B-1) in-batch negatives of each batch.

Retrieval is an exact cosine scan over an :class:`EmbeddingIndex`;
quality metrics are median rank (lower median, 1-based) and recall@K.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensorops as T
from .errors import (
    DecodeError,
    DimensionError,
    StaleArtifactError,
    ValidationError,
)
from .extractor import EMBED_DIM, FeatureExtractor
from .textenc import TextEncoderModel, fingerprint

_INDEX_MAGIC = b"TXIM"
_HEADS_MAGIC = b"TXHD"
_VERSION = 1

_INIT_STD = 0.01  # small init: cosine objectives are scale-free after normalization


@dataclass
class TrainConfig:
    """Retrieval-training hyperparameters; defaults are the shipped tuned values."""

    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 28
    embedding_size: int = 128
    margin: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.margin < 1.0:
            raise ValidationError(f"margin must be in (0,1), got {self.margin}")
        if self.batch_size < 2:
            raise ValidationError(
                f"batch_size must be >= 2 for in-batch negatives, got {self.batch_size}"
            )


class ProjectionHead:
    """tanh(W x + b) followed by L2 normalization; output is unit-norm."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise DimensionError(
                f"head weight {weight.shape} and bias {bias.shape} incompatible"
            )
        self.weight = weight
        self.bias = bias

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "ProjectionHead":
        return cls(
            rng.normal(0.0, _INIT_STD, size=(out_dim, in_dim)),
            rng.normal(0.0, _INIT_STD, size=out_dim),
        )

    def forward(self, x: np.ndarray):
        """Returns (projection, cache) with the cache used by backward."""
        u = T.add(T.matvec(self.weight, x), self.bias)
        h = T.tanh_forward(u)
        p = T.l2_normalize(h)
        return p, (x, h)

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, grad_p: np.ndarray, cache):
        """Gradients of a scalar loss w.r.t. (weight, bias) given dL/dprojection."""
        x, h = cache
        grad_h = T.l2_normalize_backward(grad_p, h)
        grad_u = T.tanh_backward(grad_h, h)
        grad_w, _ = T.matvec_backward(grad_u, self.weight, x)
        return grad_w, grad_u


# ---------------------------------------------------------------------------
# losses


def _cosine(a: np.ndarray, b: np.ndarray):
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    return float(np.dot(a, b)) / (na * nb), na, nb


def margin_loss(p_text: np.ndarray, p_vis: np.ndarray, is_match: bool, m: float):
    """Piecewise cosine-margin pair loss with exact input gradients.

    Matched pairs: 1 - cos; mismatched: max(0, cos - m). Returns
    ``(loss, grad_text, grad_vis)``.
    """
    p_text = np.asarray(p_text, dtype=np.float64)
    p_vis = np.asarray(p_vis, dtype=np.float64)
    if p_text.shape != p_vis.shape or p_text.ndim != 1:
        raise DimensionError(
            f"embedding shapes differ: {p_text.shape} vs {p_vis.shape}"
        )
    cos, nt, nv = _cosine(p_text, p_vis)
    if abs(nt - 1.0) > 1e-6 or abs(nv - 1.0) > 1e-6:
        raise ValidationError(
            f"margin_loss inputs must be unit-norm (got {nt:.8f}, {nv:.8f})"
        )
    # free-input cosine gradients; the radial parts vanish under the heads'
    # normalization backward, keeping this consistent with unit inputs
    dcos_dt = (p_vis / nv - cos * p_text / nt) / nt
    dcos_dv = (p_text / nt - cos * p_vis / nv) / nv
    if is_match:
        return 1.0 - cos, -dcos_dt, -dcos_dv
    if cos - m > 0.0:
        return cos - m, dcos_dt, dcos_dv
    return 0.0, np.zeros_like(p_text), np.zeros_like(p_vis)


def batch_loss(text_vecs, vis_vecs, text_head: ProjectionHead,
               vis_head: ProjectionHead, m: float) -> float:
    """Mean matched loss plus mean over all B*(B-1) in-batch mismatches."""
    loss, _ = _batch_loss_impl(text_vecs, vis_vecs, text_head, vis_head, m,
                               with_grads=False)
    return loss


def _batch_loss_impl(text_vecs, vis_vecs, text_head, vis_head, m, with_grads):
    b = len(text_vecs)
    if b != len(vis_vecs):
        raise ValidationError(f"batch has {b} texts but {len(vis_vecs)} images")
    if b < 2:
        raise ValidationError(f"batch_loss needs B >= 2 pairs, got {b}")

    projections_t, caches_t = [], []
    projections_v, caches_v = [], []
    for k in range(b):
        p, c = text_head.forward(np.asarray(text_vecs[k], dtype=np.float64))
        projections_t.append(p)
        caches_t.append(c)
        p, c = vis_head.forward(np.asarray(vis_vecs[k], dtype=np.float64))
        projections_v.append(p)
        caches_v.append(c)

    grads_t = [np.zeros_like(p) for p in projections_t] if with_grads else None
    grads_v = [np.zeros_like(p) for p in projections_v] if with_grads else None

    pos_sum = 0.0
    neg_sum = 0.0
    pos_coef = 1.0 / b
    neg_coef = 1.0 / (b * (b - 1))
    for k in range(b):
        for j in range(b):
            loss, g_t, g_v = margin_loss(projections_t[k], projections_v[j],
                                         is_match=(k == j), m=m)
            if k == j:
                pos_sum += loss
            else:
                neg_sum += loss
            if with_grads:
                coef = pos_coef if k == j else neg_coef
                grads_t[k] += coef * g_t
                grads_v[j] += coef * g_v
    total = pos_sum / b + neg_sum / (b * (b - 1))
    if not with_grads:
        return total, None

    gw_t = np.zeros_like(text_head.weight)
    gb_t = np.zeros_like(text_head.bias)
    gw_v = np.zeros_like(vis_head.weight)
    gb_v = np.zeros_like(vis_head.bias)
    for k in range(b):
        gw, gb = text_head.backward(grads_t[k], caches_t[k])
        gw_t += gw
        gb_t += gb
        gw, gb = vis_head.backward(grads_v[k], caches_v[k])
        gw_v += gw
        gb_v += gb
    return total, (gw_t, gb_t, gw_v, gb_v)


# ---------------------------------------------------------------------------
# training


def train(train_samples, text_model: TextEncoderModel, extractor: FeatureExtractor,
          config: TrainConfig, load_image_fn):
    """Fit both projection heads with Adam; returns (text_head, vis_head, curve).

    ``load_image_fn(sample)`` must return the sample's preprocessed image
    buffer. Texts are encoded and images embedded once up front; batch
    order reshuffles deterministically from ``config.seed`` each epoch.
    The curve holds one mean batch loss per epoch.
    """
    if not train_samples:
        raise ValidationError("cannot train on an empty split")
    texts = [text_model.encode_pair(s.title, s.comment) for s in train_samples]
    embeds = [extractor.embed(load_image_fn(s)) for s in train_samples]

    rng = np.random.default_rng(config.seed)
    text_head = ProjectionHead.init(text_model.dimension, config.embedding_size, rng)
    vis_head = ProjectionHead.init(EMBED_DIM, config.embedding_size, rng)
    states = {
        "wt": T.AdamState.for_parameter(text_head.weight),
        "bt": T.AdamState.for_parameter(text_head.bias),
        "wv": T.AdamState.for_parameter(vis_head.weight),
        "bv": T.AdamState.for_parameter(vis_head.bias),
    }

    curve: list[float] = []
    n = len(train_samples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue  # a trailing singleton has no in-batch negatives
            loss, grads = _batch_loss_impl(
                [texts[i] for i in idx], [embeds[i] for i in idx],
                text_head, vis_head, config.margin, with_grads=True,
            )
            gw_t, gb_t, gw_v, gb_v = grads
            T.adam_step(text_head.weight, gw_t, states["wt"], config.learning_rate)
            T.adam_step(text_head.bias, gb_t, states["bt"], config.learning_rate)
            T.adam_step(vis_head.weight, gw_v, states["wv"], config.learning_rate)
            T.adam_step(vis_head.bias, gb_v, states["bv"], config.learning_rate)
            batch_losses.append(loss)
        curve.append(float(np.mean(batch_losses)) if batch_losses else float("nan"))
    return text_head, vis_head, curve


# ---------------------------------------------------------------------------
# retrieval model bundle, index, ranking, metrics


@dataclass
class RetrievalModel:
    """Everything needed to answer queries: vocabularies, heads, extractor seed."""

    text_model: TextEncoderModel
    text_head: ProjectionHead
    vis_head: ProjectionHead
    extractor_seed: int

    @property
    def fingerprint(self) -> bytes:
        return fingerprint(self.text_model)


@dataclass
class EmbeddingIndex:
    ids: list[str]
    embeddings: np.ndarray  # [count, dim], rows unit-norm
    vocab_fingerprint: bytes
    extractor_seed: int

    def __post_init__(self):
        if len(self.ids) != self.embeddings.shape[0]:
            raise ValidationError(
                f"{len(self.ids)} ids but {self.embeddings.shape[0]} embedding rows"
            )
        if len(self.vocab_fingerprint) != 32:
            raise ValidationError("vocabulary fingerprint must be 32 bytes")
        norms = np.linalg.norm(self.embeddings, axis=1) if len(self.ids) else np.array([])
        if len(norms) and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValidationError("index rows must be unit-norm within 1e-6")

    def __len__(self) -> int:
        return len(self.ids)


def build_index(samples, model: RetrievalModel, extractor: FeatureExtractor,
                load_image_fn) -> EmbeddingIndex:
    """Project every sample's visual embedding through the visual head."""
    rows = [model.vis_head.project(extractor.embed(load_image_fn(s))) for s in samples]
    dim = model.vis_head.out_dim
    matrix = np.vstack(rows) if rows else np.zeros((0, dim))
    return EmbeddingIndex([s.id for s in samples], matrix, model.fingerprint,
                          model.extractor_seed)


def rank(query_title: str, query_comment: str, index: EmbeddingIndex,
         model: RetrievalModel, k: int):
    """Top-k (id, cosine) by descending score, ties broken by ascending id."""
    if model.fingerprint != index.vocab_fingerprint:
        raise StaleArtifactError(
            "index was built with a different vocabulary; rebuild the index"
        )
    if len(index) == 0:
        raise ValidationError("cannot rank against an empty index")
    query = model.text_head.project(model.text_model.encode_pair(query_title, query_comment))
    scored = [
        (index.ids[i], float(np.dot(index.embeddings[i], query)))
        for i in range(len(index))
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def median_rank(ranks: list[int]) -> int:
    """Lower median of 1-based ranks (even counts take the lower of the two)."""
    if not ranks:
        raise ValidationError("no ranks to take a median of")
    return sorted(ranks)[(len(ranks) - 1) // 2]


def recall_at_k(ranks: list[int], k: int) -> float:
    return sum(1 for r in ranks if r <= k) / len(ranks)


def evaluate(model: RetrievalModel, test_samples, index: EmbeddingIndex):
    """(MR, R@1, R@5, R@10) of each test text against the given index."""
    ranks = []
    for s in test_samples:
        ordered = rank(s.title, s.comment, index, model, k=len(index))
        position = next(
            (i + 1 for i, (sid, _) in enumerate(ordered) if sid == s.id), None
        )
        if position is None:
            raise ValidationError(f"true image {s.id} missing from index")
        ranks.append(position)
    return (
        median_rank(ranks),
        recall_at_k(ranks, 1),
        recall_at_k(ranks, 5),
        recall_at_k(ranks, 10),
    )


# ---------------------------------------------------------------------------
# persistence


def save_index(index: EmbeddingIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<III", _VERSION, len(index), index.embeddings.shape[1]))
        for sid in index.ids:
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(index.embeddings.astype("<f8").tobytes())
        fh.write(index.vocab_fingerprint)
        fh.write(struct.pack("<Q", index.extractor_seed))


def load_index(path) -> EmbeddingIndex:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _INDEX_MAGIC:
        raise DecodeError(f"{path} is not a TXIM index file")
    version, count, dim = struct.unpack_from("<III", data, 4)
    if version != _VERSION:
        raise StaleArtifactError(f"index version {version}, expected {_VERSION}")
    pos = 16
    ids = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        ids.append(data[pos:pos + n].decode("utf-8"))
        pos += n
    need = count * dim * 8
    if pos + need + 40 > len(data):
        raise DecodeError("truncated index file")
    matrix = np.frombuffer(data, dtype="<f8", count=count * dim, offset=pos)
    pos += need
    fp = data[pos:pos + 32]
    (seed,) = struct.unpack_from("<Q", data, pos + 32)
    return EmbeddingIndex(ids, matrix.reshape(count, dim).copy(), fp, seed)


def save_heads(model: RetrievalModel, path) -> None:
    """Persist both projection heads plus staleness metadata ("TXHD")."""
    th, vh = model.text_head, model.vis_head
    with open(path, "wb") as fh:
        fh.write(_HEADS_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, th.in_dim, vh.in_dim, th.out_dim))
        fh.write(th.weight.astype("<f8").tobytes())
        fh.write(th.bias.astype("<f8").tobytes())
        fh.write(vh.weight.astype("<f8").tobytes())
        fh.write(vh.bias.astype("<f8").tobytes())
        fh.write(model.fingerprint)
        fh.write(struct.pack("<Q", model.extractor_seed))


def load_heads(path, text_model: TextEncoderModel) -> RetrievalModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _HEADS_MAGIC:
        raise DecodeError(f"{path} is not a TXHD heads file")
    version, t_in, v_in, out_dim = struct.unpack_from("<IIII", data, 4)
    if version != _VERSION:
        raise StaleArtifactError(f"heads version {version}, expected {_VERSION}")
    pos = 20
    arrays = []
    for shape in ((out_dim, t_in), (out_dim,), (out_dim, v_in), (out_dim,)):
        n = int(np.prod(shape))
        if pos + n * 8 > len(data):
            raise DecodeError("truncated heads file")
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).copy())
        pos += n * 8
    fp = data[pos:pos + 32]
    (seed,) = struct.unpack_from("<Q", data, pos + 32)
    model = RetrievalModel(
        text_model=text_model,
        text_head=ProjectionHead(arrays[0], arrays[1]),
        vis_head=ProjectionHead(arrays[2], arrays[3]),
        extractor_seed=seed,
    )
    if model.fingerprint != fp:
        raise StaleArtifactError(
            "heads file was trained with a different vocabulary; retrain"
        )
    return model
