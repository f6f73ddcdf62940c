import json
import struct

import numpy as np

from textstyle import embedding as E
from textstyle.cli import build_parser, main
from textstyle.corpus import load_image
from textstyle.synthetic import query_for


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# build-index


def test_build_index_writes_all_artifacts(demo_corpus):
    data_dir = demo_corpus["data_dir"]
    for name in ("vocab.json", "heads.bin", "index.bin", "weights.bin"):
        assert (data_dir / name).exists()
    index = E.load_index(data_dir / "index.bin")
    assert len(index) == 12


def test_build_index_missing_manifest_exits_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, [
        "build-index", "--manifest", str(tmp_path / "nope.jsonl"),
        "--data-dir", str(tmp_path / "d"),
    ])
    assert code == 2
    assert "nope.jsonl" in err


def test_build_index_deterministic_bytes(demo_corpus, tmp_path, capsys):
    again = tmp_path / "again"
    code, _, _ = run_cli(capsys, [
        "build-index", "--manifest", str(demo_corpus["manifest"]),
        "--data-dir", str(again), "--min-count", "2", "--seed", "0",
    ])
    assert code == 0
    for name in ("vocab.json", "heads.bin", "index.bin", "weights.bin"):
        assert (again / name).read_bytes() == (demo_corpus["data_dir"] / name).read_bytes()


def test_build_index_prints_counts(demo_corpus, tmp_path, capsys):
    code, out, _ = run_cli(capsys, [
        "build-index", "--manifest", str(demo_corpus["manifest"]),
        "--data-dir", str(tmp_path / "d"), "--min-count", "2", "--seed", "0",
    ])
    assert code == 0
    assert "samples 12" in out
    assert "index rows 12" in out


# ---------------------------------------------------------------------------
# eval-retrieval


def test_eval_single_test_sample_perfect_metrics(demo_corpus, capsys):
    # 12 samples split 10/1/1: the single test text ranks its own image first
    code, out, _ = run_cli(capsys, [
        "eval-retrieval", "--manifest", str(demo_corpus["manifest"]),
        "--data-dir", str(demo_corpus["data_dir"]), "--seed", "0",
    ])
    assert code == 0
    assert "MR 1" in out
    assert "R@1 1.0000" in out
    assert "R@10 1.0000" in out


def test_eval_stale_vocabulary_exits_3(demo_corpus, tmp_path, capsys):
    other = tmp_path / "other"
    code, _, _ = run_cli(capsys, [
        "build-index", "--manifest", str(demo_corpus["manifest"]),
        "--data-dir", str(other), "--min-count", "3", "--seed", "0",
    ])
    assert code == 0
    code, _, err = run_cli(capsys, [
        "eval-retrieval", "--manifest", str(demo_corpus["manifest"]),
        "--data-dir", str(demo_corpus["data_dir"]),
        "--vocab", str(other / "vocab.json"), "--seed", "0",
    ])
    assert code == 3
    assert "stale" in err.lower()


# ---------------------------------------------------------------------------
# retrieve


def test_retrieve_finds_expected_cluster(demo_corpus, capsys):
    sample = demo_corpus["samples"][0]
    title, description = query_for(sample)
    code, out, _ = run_cli(capsys, [
        "retrieve", "--title", title, "--description", description,
        "--data-dir", str(demo_corpus["data_dir"]), "-k", "3",
    ])
    assert code == 0
    lines = [l for l in out.strip().splitlines() if l]
    assert len(lines) == 3
    top_id, score = lines[0].split()
    assert -1.0 <= float(score) <= 1.0
    assert demo_corpus["by_id"][top_id].cluster == sample.cluster


# ---------------------------------------------------------------------------
# transfer


def test_transfer_zero_iterations_reproduces_content(demo_corpus, content_image_file,
                                                     tmp_path, capsys):
    out_png = tmp_path / "out.png"
    style_path = demo_corpus["corpus_dir"] / demo_corpus["samples"][0].image_path
    code, out, _ = run_cli(capsys, [
        "transfer", "--content", str(content_image_file), "--style", str(style_path),
        "--out", str(out_png), "--iterations", "0",
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    original = load_image(content_image_file, max_side=128)
    written = load_image(out_png, max_side=128)
    assert np.array_equal(original, written)


def test_transfer_writes_csv(demo_corpus, content_image_file, tmp_path, capsys):
    out_png = tmp_path / "out.png"
    out_csv = tmp_path / "out.csv"
    style_path = demo_corpus["corpus_dir"] / demo_corpus["samples"][1].image_path
    code, out, _ = run_cli(capsys, [
        "transfer", "--content", str(content_image_file), "--style", str(style_path),
        "--out", str(out_png), "--csv", str(out_csv),
        "--iterations", "4", "--decay-at-iteration", "3",
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    lines = out_csv.read_text().strip().splitlines()
    assert len(lines) == 5
    assert "total" in out


def test_transfer_divergence_exits_5(demo_corpus, tmp_path, capsys):
    grainy = [s for s in demo_corpus["samples"] if s.texture == "grainy"][0]
    grainy_path = demo_corpus["corpus_dir"] / grainy.image_path
    with np.errstate(over="ignore"):
        code, _, err = run_cli(capsys, [
            "transfer", "--content", str(grainy_path), "--style", str(grainy_path),
            "--out", str(tmp_path / "x.png"), "--iterations", "2",
            "--decay-at-iteration", "1", "--tv-weight", "1e308",
            "--data-dir", str(demo_corpus["data_dir"]),
        ])
    assert code == 5
    assert "divergence" in err.lower()


# ---------------------------------------------------------------------------
# pipeline


def test_pipeline_retrieves_from_expected_cluster(demo_corpus, content_image_file,
                                                  tmp_path, capsys):
    sample = demo_corpus["samples"][2]
    title, description = query_for(sample)
    out_png = tmp_path / "styled.png"
    code, out, _ = run_cli(capsys, [
        "pipeline", "--manifest", str(demo_corpus["manifest"]),
        "--content", str(content_image_file),
        "--title", title, "--description", description,
        "--out", str(out_png), "--iterations", "4", "--decay-at-iteration", "3",
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    retrieved = [l for l in out.splitlines() if l.startswith("retrieved ")][0].split()[1]
    assert demo_corpus["by_id"][retrieved].cluster == sample.cluster
    assert out_png.exists()


def test_pipeline_zero_iterations_returns_content(demo_corpus, content_image_file,
                                                  tmp_path, capsys):
    out_png = tmp_path / "same.png"
    code, _, _ = run_cli(capsys, [
        "pipeline", "--manifest", str(demo_corpus["manifest"]),
        "--content", str(content_image_file), "--title", "azure study",
        "--out", str(out_png), "--iterations", "0",
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    assert np.array_equal(load_image(content_image_file, 128), load_image(out_png, 128))


def test_pipeline_deterministic_output_bytes(demo_corpus, content_image_file,
                                             tmp_path, capsys):
    outputs = []
    for name in ("a.png", "b.png"):
        out_png = tmp_path / name
        code, _, _ = run_cli(capsys, [
            "pipeline", "--manifest", str(demo_corpus["manifest"]),
            "--content", str(content_image_file), "--title", "luminous crimson study",
            "--description", "a smooth crimson painting",
            "--out", str(out_png), "--iterations", "5", "--decay-at-iteration", "4",
            "--seed", "7", "--data-dir", str(demo_corpus["data_dir"]),
        ])
        assert code == 0
        outputs.append(out_png.read_bytes())
    assert outputs[0] == outputs[1]


def test_pipeline_empty_index_exits_4(demo_corpus, content_image_file, tmp_path, capsys):
    empty_dir = tmp_path / "empty"
    empty_dir.mkdir()
    for name in ("vocab.json", "heads.bin", "weights.bin"):
        (empty_dir / name).write_bytes((demo_corpus["data_dir"] / name).read_bytes())
    full = E.load_index(demo_corpus["data_dir"] / "index.bin")
    empty_index = E.EmbeddingIndex([], np.zeros((0, full.embeddings.shape[1])),
                                   full.vocab_fingerprint, full.extractor_seed)
    E.save_index(empty_index, empty_dir / "index.bin")
    code, _, err = run_cli(capsys, [
        "pipeline", "--manifest", str(demo_corpus["manifest"]),
        "--content", str(content_image_file), "--title", "azure",
        "--out", str(tmp_path / "x.png"),
        "--data-dir", str(empty_dir),
    ])
    assert code == 4
    assert "empty" in err.lower()


# ---------------------------------------------------------------------------
# config handling


def test_config_file_merged_and_flags_win(demo_corpus, content_image_file,
                                          tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"iterations": 2, "decay_at_iteration": 1,
                                    "seed": 9}))
    out_a = tmp_path / "a.png"
    code, _, _ = run_cli(capsys, [
        "pipeline", "--manifest", str(demo_corpus["manifest"]),
        "--content", str(content_image_file), "--title", "emerald study",
        "--out", str(out_a), "--config", str(cfg_path),
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    # flags override the file: 3 iterations beats the file's 2
    out_b = tmp_path / "b.png"
    code, _, _ = run_cli(capsys, [
        "pipeline", "--manifest", str(demo_corpus["manifest"]),
        "--content", str(content_image_file), "--title", "emerald study",
        "--out", str(out_b), "--config", str(cfg_path), "--iterations", "3",
        "--decay-at-iteration", "2", "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 0
    assert out_a.read_bytes() != out_b.read_bytes()


def test_unknown_config_field_rejected(demo_corpus, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"iterations": 2, "no_such_knob": 1}))
    code, _, err = run_cli(capsys, [
        "retrieve", "--title", "azure", "--config", str(cfg_path),
        "--data-dir", str(demo_corpus["data_dir"]),
    ])
    assert code == 4
    assert "no_such_knob" in err


def test_help_lists_tuned_defaults():
    parser = build_parser()
    for command, expected in [
        ("build-index", ["--epochs", "30", "--learning-rate", "0.001",
                         "--batch-size", "28", "--embedding-size", "128",
                         "--margin", "0.1"]),
        ("transfer", ["--content-weight", "0.001", "--style-layers", "2,4,6,7",
                      "--style-weights", "400,50,10,5", "--tv-weight", "0.005",
                      "--iterations", "200", "--lr-initial", "3.0",
                      "--lr-after", "0.1", "--decay-at-iteration", "180"]),
    ]:
        sub = parser._subparsers._group_actions[0].choices[command]
        text = sub.format_help()
        for token in expected:
            assert token in text, f"{command} help missing {token}"


def test_index_file_header_layout(demo_corpus):
    raw = (demo_corpus["data_dir"] / "index.bin").read_bytes()
    assert raw[:4] == b"TXIM"
    version, count, dim = struct.unpack_from("<III", raw, 4)
    assert (version, count, dim) == (1, 12, 128)


def test_weights_file_header_layout(demo_corpus):
    raw = (demo_corpus["data_dir"] / "weights.bin").read_bytes()
    assert raw[:4] == b"TSTW"
    (version,) = struct.unpack_from("<I", raw, 4)
    assert version == 1
    c_out, c_in = struct.unpack_from("<II", raw, 8)
    assert (c_out, c_in) == (8, 3)
