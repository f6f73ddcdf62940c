"""Fixed-weight convolutional feature extractor.

Eight blocks of conv(3x3, pad 1, stride 1) + ReLU over the channel plan
3 -> 8 -> 8 -> 16 -> 16 -> 32 -> 32 -> 64 -> 64, with a 2x2 max pool after
blocks 2, 4 and 6. Tapped feature maps are the post-ReLU block outputs
*before* pooling. Weights are He-initialized from a seed by default, or
loaded from a little-endian "TSTW" weights file; they never train.

Besides per-layer features (style transfer) the extractor provides a
64-d global-average-pooled embedding of block 8 (retrieval) and exact
backpropagation of feature-space gradients onto the input pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensorops as T
from .corpus import validate_image_buffer
from .errors import DecodeError, DimensionError, StaleArtifactError, ValidationError

CHANNEL_PLAN: tuple[tuple[int, int], ...] = (
    (3, 8), (8, 8), (8, 16), (16, 16), (16, 32), (32, 32), (32, 64), (64, 64),
)
POOL_AFTER = frozenset({2, 4, 6})
NUM_BLOCKS = len(CHANNEL_PLAN)
EMBED_DIM = CHANNEL_PLAN[-1][1]

_MAGIC = b"TSTW"
_VERSION = 1


@dataclass
class FeatureMap:
    """Post-ReLU activations of one block, flattened to [channels, H*W]."""

    layer_index: int
    data: np.ndarray
    height: int
    width: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_size(self) -> int:
        return self.data.shape[1]


class FeatureExtractor:
    """Immutable 8-block CNN; construct via :meth:`from_seed` or :meth:`from_file`."""

    def __init__(self, kernels: list[np.ndarray], biases: list[np.ndarray], seed: int = 0):
        if len(kernels) != NUM_BLOCKS or len(biases) != NUM_BLOCKS:
            raise ValidationError(f"expected {NUM_BLOCKS} blocks of weights")
        self.kernels = []
        self.biases = []
        for i, (c_in, c_out) in enumerate(CHANNEL_PLAN):
            k = np.ascontiguousarray(np.asarray(kernels[i], dtype=np.float64))
            b = np.ascontiguousarray(np.asarray(biases[i], dtype=np.float64))
            if k.shape != (c_out, c_in, 3, 3) or b.shape != (c_out,):
                raise ValidationError(
                    f"block {i + 1} weights {k.shape}/{b.shape} do not match plan "
                    f"{(c_out, c_in, 3, 3)}/{(c_out,)}"
                )
            k.flags.writeable = False
            b.flags.writeable = False
            self.kernels.append(k)
            self.biases.append(b)
        self.seed = int(seed)

    @classmethod
    def from_seed(cls, seed: int) -> "FeatureExtractor":
        """He-initialized kernels (std = sqrt(2 / fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        kernels = []
        biases = []
        for c_in, c_out in CHANNEL_PLAN:
            std = np.sqrt(2.0 / (c_in * 9))
            kernels.append(rng.normal(0.0, std, size=(c_out, c_in, 3, 3)))
            biases.append(np.zeros(c_out))
        return cls(kernels, biases, seed=seed)

    # -- forward ------------------------------------------------------------

    def _validate_layers(self, layers) -> list[int]:
        wanted = sorted(set(int(l) for l in layers))
        if not wanted:
            raise ValidationError("at least one layer index is required")
        for l in wanted:
            if not 1 <= l <= NUM_BLOCKS:
                raise ValidationError(f"layer index {l} outside 1..{NUM_BLOCKS}")
        return wanted

    def _forward(self, image: np.ndarray, record: bool):
        """Run all blocks; optionally record intermediates for backprop."""
        x = np.asarray(image, dtype=np.float64)
        features = []
        trace = [] if record else None
        for l in range(1, NUM_BLOCKS + 1):
            k, b = self.kernels[l - 1], self.biases[l - 1]
            z = T.conv2d_forward(x, k, padding=1) + b[:, None, None]
            f = T.relu_forward(z)
            pooled_mask = None
            next_x = f
            if l in POOL_AFTER:
                next_x, pooled_mask = T.maxpool2_forward(f)
            if record:
                trace.append((x, z, f, pooled_mask))
            features.append(f)
            x = next_x
        return features, trace

    def extract(self, image: np.ndarray, layers) -> dict[int, FeatureMap]:
        """Feature maps for the requested block indices (1..8)."""
        wanted = self._validate_layers(layers)
        validate_image_buffer(image)  # shape/divisibility only; values unchecked
        features, _ = self._forward(image, record=False)
        out = {}
        for l in wanted:
            f = features[l - 1]
            c, h, w = f.shape
            out[l] = FeatureMap(l, f.reshape(c, h * w), h, w)
        return out

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Global average pool of block 8 -> 64-d visual embedding."""
        fm = self.extract(image, [NUM_BLOCKS])[NUM_BLOCKS]
        return fm.data.mean(axis=1)

    # -- backward -----------------------------------------------------------

    def backprop_to_image(self, image: np.ndarray, grads: dict[int, np.ndarray]) -> np.ndarray:
        """Pixel gradient of sum_l <grads[l], F^l> for tapped layers ``l``."""
        wanted = self._validate_layers(grads.keys())
        features, trace = self._forward(image, record=True)
        for l in wanted:
            f = features[l - 1]
            g = np.asarray(grads[l], dtype=np.float64)
            expect = (f.shape[0], f.shape[1] * f.shape[2])
            if g.shape != expect:
                raise DimensionError(
                    f"layer {l} grad shape {g.shape} != feature shape {expect}"
                )

        grad_next = None  # gradient w.r.t. the input of block l+1
        for l in range(NUM_BLOCKS, 0, -1):
            x, z, f, pool_mask = trace[l - 1]
            grad_f = np.zeros_like(f)
            if grad_next is not None:
                if pool_mask is not None:
                    grad_f += T.maxpool2_backward(grad_next, pool_mask)
                else:
                    grad_f += grad_next
            if l in grads:
                grad_f += np.asarray(grads[l], dtype=np.float64).reshape(f.shape)
            grad_z = T.relu_backward(grad_f, z)
            grad_next, _ = T.conv2d_backward(grad_z, x, self.kernels[l - 1], padding=1)
        return grad_next

    # -- persistence ----------------------------------------------------------

    def save_weights(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            for k, b in zip(self.kernels, self.biases):
                c_out, c_in = k.shape[0], k.shape[1]
                fh.write(struct.pack("<II", c_out, c_in))
                fh.write(k.astype("<f8").tobytes())
                fh.write(b.astype("<f8").tobytes())

    @classmethod
    def from_file(cls, path, seed: int = 0) -> "FeatureExtractor":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != _MAGIC:
            raise DecodeError(f"{path} is not a TSTW weights file")
        (version,) = struct.unpack_from("<I", data, 4)
        if version != _VERSION:
            raise StaleArtifactError(f"weights file version {version}, expected {_VERSION}")
        pos = 8
        kernels = []
        biases = []
        for c_in_plan, c_out_plan in CHANNEL_PLAN:
            if pos + 8 > len(data):
                raise DecodeError("truncated weights file")
            c_out, c_in = struct.unpack_from("<II", data, pos)
            pos += 8
            if (c_in, c_out) != (c_in_plan, c_out_plan):
                raise StaleArtifactError(
                    f"weights block {c_in}->{c_out} does not match plan "
                    f"{c_in_plan}->{c_out_plan}"
                )
            nk = c_out * c_in * 9
            if pos + (nk + c_out) * 8 > len(data):
                raise DecodeError("truncated weights file")
            k = np.frombuffer(data, dtype="<f8", count=nk, offset=pos).reshape(c_out, c_in, 3, 3)
            pos += nk * 8
            b = np.frombuffer(data, dtype="<f8", count=c_out, offset=pos)
            pos += c_out * 8
            kernels.append(k.copy())
            biases.append(b.copy())
        return cls(kernels, biases, seed=seed)
