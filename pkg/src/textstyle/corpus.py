"""Corpus loading: JSONL manifests, PNG/PPM images, train/val/test splits.

Images become float64 arrays of shape [3, H, W] with values in [0, 1].
Preprocessing downscales so the longer side fits ``max_side`` (bilinear),
then center-crops H and W to multiples of 8 so the feature extractor's
three 2x2 pools divide cleanly. The minimum usable side is 8.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ParseError, ValidationError

MIN_SIDE = 8


@dataclass
class CorpusSample:
    """One artwork record: image plus title, comment and attribute strings."""

    id: str
    image_path: str
    title: str
    comment: str
    attributes: dict[str, str] = field(default_factory=dict)


def load_manifest(path) -> list[CorpusSample]:
    """Read a JSONL manifest; one sample object per line, blank lines skipped.

    Raises ParseError naming the 1-based line on malformed JSON or missing
    fields, and ValidationError on duplicate ids.
    """
    samples: list[CorpusSample] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            for key in ("id", "image_path", "title", "comment"):
                if key not in obj:
                    raise ParseError(f'missing required field "{key}"', lineno)
                if not isinstance(obj[key], str):
                    raise ParseError(f'field "{key}" must be a string', lineno)
            attrs = obj.get("attributes", {})
            if not isinstance(attrs, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in attrs.items()
            ):
                raise ParseError('field "attributes" must map strings to strings', lineno)
            if obj["id"] in seen:
                raise ValidationError(f'duplicate sample id "{obj["id"]}"')
            seen.add(obj["id"])
            samples.append(
                CorpusSample(obj["id"], obj["image_path"], obj["title"],
                             obj["comment"], dict(attrs))
            )
    return samples


# ---------------------------------------------------------------------------
# image decode / encode


def _decode_ppm(data: bytes) -> np.ndarray:
    """Binary PPM (P6), maxval <= 255. Returns float [3,H,W] in [0,1]."""
    tokens: list[bytes] = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed
    while len(tokens) < 4:
        if pos >= len(data):
            raise DecodeError("truncated PPM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise DecodeError(f"unsupported PPM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise DecodeError("non-numeric PPM header field") from exc
    if width < 1 or height < 1:
        raise DecodeError(f"bad PPM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise DecodeError(f"unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise DecodeError("truncated PPM pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return arr.astype(np.float64).transpose(2, 0, 1) / float(maxval)


def _decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode PNG: {exc}") from exc
    return arr.transpose(2, 0, 1) / 255.0


def bilinear_resize(image: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample of [C,H,W] onto a new_h x new_w grid (float64)."""
    c, h, w = image.shape
    ys = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - fx) + image[:, y0][:, :, x1] * fx
    bottom = image[:, y1][:, :, x0] * (1 - fx) + image[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bottom * fy


def load_image(path, max_side: int = 512) -> np.ndarray:
    """Decode a PNG or binary PPM into a preprocessed [3,H,W] buffer.

    Longer side above ``max_side`` is bilinearly downscaled (aspect kept),
    then H and W are center-cropped to multiples of 8.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P6":
        image = _decode_ppm(data)
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        image = _decode_png(data)
    else:
        raise DecodeError(f"unsupported image format in {path}")

    _, h, w = image.shape
    longest = max(h, w)
    if longest > max_side:
        s = max_side / longest
        new_h = max(1, int(round(h * s)))
        new_w = max(1, int(round(w * s)))
        image = bilinear_resize(image, new_h, new_w)
        h, w = new_h, new_w

    h8 = (h // 8) * 8
    w8 = (w // 8) * 8
    if h8 < MIN_SIDE or w8 < MIN_SIDE:
        raise ValidationError(
            f"image {w}x{h} too small: needs at least {MIN_SIDE} pixels per side "
            "after cropping to multiples of 8"
        )
    top = (h - h8) // 2
    left = (w - w8) // 2
    image = image[:, top:top + h8, left:left + w8]
    return np.clip(np.ascontiguousarray(image), 0.0, 1.0)


def validate_image_buffer(image: np.ndarray) -> None:
    """Check the [3,H,W], multiple-of-8, min-side-8 shape contract."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValidationError(f"expected [3,H,W] image, got shape {image.shape}")
    _, h, w = image.shape
    if h % 8 or w % 8 or h < MIN_SIDE or w < MIN_SIDE:
        raise ValidationError(
            f"image sides must be multiples of 8 and >= {MIN_SIDE}, got {h}x{w}"
        )


def image_to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a [3,H,W] float buffer in [0,1] to HWC uint8."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_ppm(image: np.ndarray, path) -> None:
    """Write a [3,H,W] float buffer as binary PPM (P6, maxval 255)."""
    arr = image_to_uint8(image)
    h, w, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def save_png(image: np.ndarray, path) -> None:
    """Write a [3,H,W] float buffer as PNG."""
    Image.fromarray(image_to_uint8(image), mode="RGB").save(path, format="PNG")


def encode_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image_to_uint8(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# splitting


def split_corpus(samples: list[CorpusSample], seed: int,
                 fractions=(0.8, 0.1, 0.1)):
    """Deterministic shuffled split into (train, val, test).

    Sizes are floor(n * fraction) with the remainder going to train; an
    empty validation or test partition is an error.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions {fractions} do not sum to 1")
    n = len(samples)
    if n < 3:
        raise ValidationError(f"need at least 3 samples to split, got {n}")
    n_train = math.floor(n * fractions[0])
    n_val = math.floor(n * fractions[1])
    n_test = math.floor(n * fractions[2])
    n_train += n - (n_train + n_val + n_test)
    if n_val == 0 or n_test == 0:
        raise ValidationError(
            f"split of {n} samples with fractions {fractions} leaves an empty partition"
        )
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:n_train + n_val]]
    test = [samples[i] for i in order[n_train + n_val:]]
    return train, val, test
