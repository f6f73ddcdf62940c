"""Iterative style synthesis: content + Gram-style + total-variation losses.

The synthesized image starts as a copy of the content image and is
updated by Adam on raw pixels, clamped to [0, 1] after every step. The
learning rate is ``lr_initial`` until ``decay_at_iteration`` and
``lr_after`` from then on.

Loss pieces, for feature maps F (synthesized) and P (content) and Gram
matrices G (synthesized) and A (style target) at layer l with N channels
and M spatial positions:

    content:      1/2 * sum((F - P)^2)
    layer style:  E_l = sum((G - A)^2) / (4 N^2 M^2)
    style:        sum_l w_l * E_l
    tv:           anisotropic squared neighbor differences

The total is content_weight * content + style + tv_weight * tv; the
style weights w_l are already inside the style term.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .corpus import validate_image_buffer
from .errors import DimensionError, DivergenceError, ValidationError
from .extractor import FeatureExtractor
from .tensorops import AdamState, adam_step


@dataclass
class StyleConfig:
    """Synthesis hyperparameters; defaults are the shipped tuned values."""

    content_layers: tuple[int, ...] = (3,)
    content_weight: float = 0.001
    style_layers: tuple[int, ...] = (2, 4, 6, 7)
    style_weights: tuple[float, ...] = (400.0, 50.0, 10.0, 5.0)
    tv_weight: float = 0.005
    iterations: int = 200
    lr_initial: float = 3.0
    lr_after: float = 0.1
    decay_at_iteration: int = 180
    seed: int = 0

    def __post_init__(self):
        self.content_layers = tuple(int(l) for l in self.content_layers)
        self.style_layers = tuple(int(l) for l in self.style_layers)
        self.style_weights = tuple(float(w) for w in self.style_weights)
        if len(self.style_weights) != len(self.style_layers):
            raise ValidationError(
                f"{len(self.style_layers)} style layers but "
                f"{len(self.style_weights)} style weights"
            )
        if any(w < 0 for w in self.style_weights) or self.content_weight < 0 \
                or self.tv_weight < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        if self.decay_at_iteration <= 0 or (
            self.iterations > 0 and self.decay_at_iteration > self.iterations
        ):
            raise ValidationError(
                f"decay_at_iteration {self.decay_at_iteration} must be in "
                f"(0, iterations={self.iterations}]"
            )

    def layer_weight(self, layer: int) -> float:
        return self.style_weights[self.style_layers.index(layer)]

    def lr_at(self, iteration: int) -> float:
        return self.lr_initial if iteration < self.decay_at_iteration else self.lr_after


@dataclass
class LossRecord:
    content: float
    style: float
    tv: float
    total: float


@dataclass
class SynthesisState:
    """The image under optimization plus its optimizer and loss history."""

    image: np.ndarray
    adam: AdamState
    iteration: int = 0
    history: list[LossRecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# loss pieces


def content_loss(F: np.ndarray, P: np.ndarray):
    """1/2 sum((F - P)^2) and its gradient (F - P) w.r.t. F."""
    F = np.asarray(F, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if F.shape != P.shape:
        raise DimensionError(f"feature shapes differ: {F.shape} vs {P.shape}")
    diff = F - P
    return 0.5 * float(np.sum(diff * diff)), diff


def gram(F: np.ndarray) -> np.ndarray:
    """G = F F^T over the spatial axis of an [N, M] feature map.

    Accumulated column by column so each entry's additions run in spatial
    order, bit-identical to an explicit double loop over channels.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise DimensionError(f"gram expects an [N, M] feature map, got {F.shape}")
    n, m = F.shape
    G = np.zeros((n, n))
    for col in range(m):
        v = F[:, col]
        G += np.outer(v, v)
    return G


def layer_style_loss(F: np.ndarray, target_gram: np.ndarray):
    """E_l = sum((G - A)^2) / (4 N^2 M^2); gradient (G - A) F / (N^2 M^2)."""
    F = np.asarray(F, dtype=np.float64)
    A = np.asarray(target_gram, dtype=np.float64)
    n, m = F.shape
    if A.shape != (n, n):
        raise DimensionError(f"target gram {A.shape} does not match {n} channels")
    diff = gram(F) - A
    denom = float(n * n) * float(m * m)
    loss = float(np.sum(diff * diff)) / (4.0 * denom)
    grad = (diff @ F) / denom
    return loss, grad


def style_loss(feature_maps: dict[int, np.ndarray],
               target_grams: dict[int, np.ndarray], config: StyleConfig):
    """sum_l w_l E_l over the configured style layers, plus per-layer grads."""
    total = 0.0
    grads: dict[int, np.ndarray] = {}
    for layer in config.style_layers:
        if layer not in feature_maps or layer not in target_grams:
            raise ValidationError(f"style layer {layer} missing from inputs")
        e, grad = layer_style_loss(feature_maps[layer], target_grams[layer])
        w = config.layer_weight(layer)
        total += w * e
        grads[layer] = w * grad
    return total, grads


def tv_loss(image: np.ndarray):
    """Anisotropic squared total variation and its exact pixel gradient."""
    x = np.asarray(image, dtype=np.float64)
    dv = x[:, 1:, :] - x[:, :-1, :]
    dh = x[:, :, 1:] - x[:, :, :-1]
    loss = float(np.sum(dv * dv)) + float(np.sum(dh * dh))
    grad = np.zeros_like(x)
    grad[:, 1:, :] += 2.0 * dv
    grad[:, :-1, :] -= 2.0 * dv
    grad[:, :, 1:] += 2.0 * dh
    grad[:, :, :-1] -= 2.0 * dh
    return loss, grad


# ---------------------------------------------------------------------------
# full objective


def prepare_targets(content: np.ndarray, style: np.ndarray,
                    extractor: FeatureExtractor, config: StyleConfig):
    """Content feature maps and style target Grams, extracted once."""
    content_maps = extractor.extract(content, config.content_layers) \
        if config.content_layers else {}
    content_targets = {l: fm.data.copy() for l, fm in content_maps.items()}
    style_maps = extractor.extract(style, config.style_layers) \
        if config.style_layers else {}
    style_targets = {l: gram(fm.data) for l, fm in style_maps.items()}
    return content_targets, style_targets


def total_loss_and_grad(image: np.ndarray, content_targets, style_targets,
                        extractor: FeatureExtractor, config: StyleConfig):
    """Losses at ``image`` and the exact combined pixel gradient.

    Returns ``(LossRecord, grad)``. The record stores the raw content sum,
    the weighted style sum, the raw TV value, and the weighted total.
    """
    layers = sorted(set(config.content_layers) | set(config.style_layers))
    feats = extractor.extract(image, layers) if layers else {}
    flat = {l: fm.data for l, fm in feats.items()}

    c_total = 0.0
    feature_grads: dict[int, np.ndarray] = {}
    for layer in config.content_layers:
        c, grad = content_loss(flat[layer], content_targets[layer])
        c_total += c
        feature_grads[layer] = config.content_weight * grad

    s_total, s_grads = style_loss(flat, style_targets, config) \
        if config.style_layers else (0.0, {})
    for layer, grad in s_grads.items():
        if layer in feature_grads:
            feature_grads[layer] = feature_grads[layer] + grad
        else:
            feature_grads[layer] = grad

    t, tv_grad = tv_loss(image)
    pixel_grad = config.tv_weight * tv_grad
    if feature_grads:
        pixel_grad = pixel_grad + extractor.backprop_to_image(image, feature_grads)

    total = config.content_weight * c_total + s_total + config.tv_weight * t
    return LossRecord(c_total, s_total, t, total), pixel_grad


def synthesize(content: np.ndarray, style: np.ndarray, extractor: FeatureExtractor,
               config: StyleConfig, on_progress=None):
    """Optimize a copy of the content image toward the style targets.

    Each iteration records its pre-step losses in the history (so entry 0
    is the loss of the initial image) and invokes ``on_progress(iteration,
    record)`` if given. Returns ``(image, history)``.
    """
    validate_image_buffer(content)
    validate_image_buffer(style)

    content_targets, style_targets = prepare_targets(content, style, extractor, config)
    state = SynthesisState(image=content.copy(),
                           adam=AdamState.for_parameter(content))
    for i in range(config.iterations):
        record, grad = total_loss_and_grad(
            state.image, content_targets, style_targets, extractor, config
        )
        if not np.isfinite(record.total):
            raise DivergenceError(f"non-finite total loss {record.total}", iteration=i)
        state.history.append(record)
        state.iteration = i + 1
        if on_progress is not None:
            on_progress(i, record)
        adam_step(state.image, grad, state.adam, config.lr_at(i))
        np.clip(state.image, 0.0, 1.0, out=state.image)
    return state.image, state.history


def write_history_csv(history: list[LossRecord], config: StyleConfig, path) -> None:
    """Loss curve as CSV: iteration, content, style, tv, total, lr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "content_loss", "style_loss", "tv_loss",
                         "total", "lr"])
        for i, rec in enumerate(history):
            writer.writerow([i, repr(rec.content), repr(rec.style), repr(rec.tv),
                             repr(rec.total), repr(config.lr_at(i))])
