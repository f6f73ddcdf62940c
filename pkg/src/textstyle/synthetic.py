"""Synthetic demo corpora with known text-image structure.

Samples fall into ``n_clusters`` color clusters, each crossed with a
brightness word (luminous/shadowy) and a texture word (smooth/grainy),
so texts and images share a recoverable type signal. Optionally every
sample also carries a unique alphabetic token repeated often enough to
survive the vocabulary threshold, which makes the corpus perfectly
separable on its training split.

Used by the test suite and handy for demos:

    python -m textstyle.synthetic OUTDIR --samples 64 --seed 7
"""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass

import numpy as np

from .corpus import bilinear_resize, save_ppm
from .errors import ValidationError

CLUSTER_COLORS = {
    "crimson": (0.80, 0.22, 0.22),
    "emerald": (0.22, 0.78, 0.30),
    "azure": (0.20, 0.35, 0.82),
    "amber": (0.85, 0.70, 0.18),
}
BRIGHTNESS = {"luminous": 0.16, "shadowy": -0.16}
TEXTURE = {"smooth": 0.015, "grainy": 0.20}


@dataclass
class SyntheticSample:
    id: str
    cluster: str
    brightness: str
    texture: str
    title: str
    comment: str
    image_path: str

    @property
    def type_key(self) -> tuple[str, str, str]:
        return (self.cluster, self.brightness, self.texture)


def random_image(seed: int, height: int = 32, width: int = 32) -> np.ndarray:
    """Smooth random [3,H,W] image: bilinear upsample of coarse noise."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.1, 0.9, size=(3, max(2, height // 8), max(2, width // 8)))
    return np.clip(bilinear_resize(coarse, height, width), 0.0, 1.0)


def contrast_pair(seed: int = 1, size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """A (content, style) fixture pair with strong style distance.

    Content is a bright, smooth crimson image; style is a dark, grainy
    azure one, so Gram statistics start far apart.
    """
    rng = np.random.default_rng(seed)
    content = _sample_image(rng, CLUSTER_COLORS["crimson"], BRIGHTNESS["luminous"],
                            TEXTURE["smooth"], size)
    style = _sample_image(rng, CLUSTER_COLORS["azure"], BRIGHTNESS["shadowy"],
                          TEXTURE["grainy"], size)
    return content, style


def _sample_image(rng: np.random.Generator, color, brightness: float,
                  noise_amp: float, size: int) -> np.ndarray:
    base = np.asarray(color, dtype=np.float64)[:, None, None]
    img = np.repeat(np.repeat(base, size, axis=1), size, axis=2) + brightness
    img = img + rng.normal(0.0, noise_amp, size=img.shape)
    # small per-sample smooth field keeps every image distinct after 8-bit save
    coarse = rng.uniform(-0.03, 0.03, size=(3, max(2, size // 8), max(2, size // 8)))
    img = img + bilinear_resize(coarse, size, size)
    return np.clip(img, 0.02, 0.98)


def _unique_token(rng: np.random.Generator) -> str:
    return "".join(rng.choice(list(string.ascii_lowercase), size=8))


def make_corpus(out_dir, n_samples: int = 64, n_clusters: int = 4, seed: int = 0,
                image_size: int = 16, unique_tokens: bool = False,
                repeats: int = 12) -> list[SyntheticSample]:
    """Write images/ and manifest.jsonl under ``out_dir``; return the samples."""
    if not 1 <= n_clusters <= len(CLUSTER_COLORS):
        raise ValidationError(f"n_clusters must be 1..{len(CLUSTER_COLORS)}")
    if image_size % 8 or image_size < 8:
        raise ValidationError("image_size must be a positive multiple of 8")
    rng = np.random.default_rng(seed)
    clusters = list(CLUSTER_COLORS)[:n_clusters]
    types = [
        (c, b, t)
        for c in clusters
        for b in BRIGHTNESS
        for t in TEXTURE
    ]
    # balanced but shuffled type assignment: every type appears
    # floor/ceil(n/len(types)) times, in seed-dependent order
    assignment = (types * (n_samples // len(types) + 1))[:n_samples]
    rng.shuffle(assignment)

    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)
    samples: list[SyntheticSample] = []
    lines = []
    for i in range(n_samples):
        cluster, bright, texture = assignment[i]
        sid = f"art{i:03d}"
        rel_path = f"images/{sid}.ppm"
        img = _sample_image(rng, CLUSTER_COLORS[cluster], BRIGHTNESS[bright],
                            TEXTURE[texture], image_size)
        save_ppm(img, os.path.join(out_dir, rel_path))

        title = f"{bright} {cluster} {texture} study"
        comment = (
            f"a {texture} {cluster} painting in {bright} light, "
            f"the {cluster} palette feels {bright} and {texture}"
        )
        if unique_tokens:
            token = _unique_token(rng)
            comment += " " + " ".join([token] * repeats)
        sample = SyntheticSample(sid, cluster, bright, texture, title, comment, rel_path)
        samples.append(sample)
        lines.append(json.dumps({
            "id": sid,
            "image_path": rel_path,
            "title": title,
            "comment": comment,
            "attributes": {"cluster": cluster, "brightness": bright, "texture": texture},
        }))
    with open(os.path.join(out_dir, "manifest.jsonl"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return samples


def query_for(sample: SyntheticSample) -> tuple[str, str]:
    """A (title, description) query that should retrieve the sample's type."""
    return (
        f"{sample.brightness} {sample.cluster} {sample.texture} study",
        f"a {sample.texture} {sample.cluster} painting in {sample.brightness} light",
    )


def _main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="generate a synthetic demo corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--samples", type=int, default=64)
    parser.add_argument("--clusters", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=16)
    parser.add_argument("--unique-tokens", action="store_true")
    args = parser.parse_args(argv)
    samples = make_corpus(args.out_dir, args.samples, args.clusters, args.seed,
                          args.size, args.unique_tokens)
    print(f"wrote {len(samples)} samples to {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(_main())
