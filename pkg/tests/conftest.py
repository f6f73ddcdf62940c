import json
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """A small synthetic corpus plus artifacts built through the CLI."""
    from textstyle.cli import main
    from textstyle.synthetic import make_corpus

    root = tmp_path_factory.mktemp("demo")
    corpus_dir = root / "corpus"
    data_dir = root / "data"
    samples = make_corpus(str(corpus_dir), n_samples=12, seed=1, image_size=16)
    manifest = corpus_dir / "manifest.jsonl"
    code = main([
        "build-index",
        "--manifest", str(manifest),
        "--data-dir", str(data_dir),
        "--min-count", "2",
        "--seed", "0",
    ])
    assert code == 0, "fixture build-index failed"
    return {
        "root": root,
        "corpus_dir": corpus_dir,
        "manifest": manifest,
        "data_dir": data_dir,
        "samples": samples,
        "by_id": {s.id: s for s in samples},
    }


@pytest.fixture(scope="session")
def content_image_file(tmp_path_factory):
    """A 16x16 content image saved as PPM for pipeline runs."""
    from textstyle.corpus import save_ppm
    from textstyle.synthetic import random_image

    path = tmp_path_factory.mktemp("content") / "content.ppm"
    save_ppm(random_image(123, 16, 16), path)
    return path


def read_manifest_ids(manifest):
    ids = []
    with open(manifest, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                ids.append(json.loads(line)["id"])
    return ids
