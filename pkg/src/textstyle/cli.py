"""Command-line entry point.

Subcommands: build-index, train-retrieval, eval-retrieval, retrieve,
transfer, pipeline, serve. Settings merge a JSON config file with
command-line flags (flags win); defaults are the shipped tuned
hyperparameters. Exit codes: 0 ok, 2 I/O or parse failure, 3 stale or
incompatible artifacts, 4 empty/degenerate data, 5 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields, replace

from . import corpus, embedding, textenc, transfer
from .errors import (
    DecodeError,
    DegenerateInputError,
    DivergenceError,
    ParseError,
    StaleArtifactError,
    ValidationError,
)
from .extractor import FeatureExtractor


@dataclass
class RunConfig:
    """All tunables plus paths; every field has a CLI flag."""

    # retrieval training
    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 28
    embedding_size: int = 128
    margin: float = 0.1
    min_count: int = 10
    # style transfer
    content_layers: tuple = (3,)
    content_weight: float = 0.001
    style_layers: tuple = (2, 4, 6, 7)
    style_weights: tuple = (400.0, 50.0, 10.0, 5.0)
    tv_weight: float = 0.005
    iterations: int = 200
    lr_initial: float = 3.0
    lr_after: float = 0.1
    decay_at_iteration: int = 180
    # shared
    seed: int = 0
    max_side: int = 128
    data_dir: str = ""

    def train_config(self) -> embedding.TrainConfig:
        return embedding.TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate,
            batch_size=self.batch_size, embedding_size=self.embedding_size,
            margin=self.margin, seed=self.seed,
        )

    def style_config(self) -> transfer.StyleConfig:
        return transfer.StyleConfig(
            content_layers=self.content_layers, content_weight=self.content_weight,
            style_layers=self.style_layers, style_weights=self.style_weights,
            tv_weight=self.tv_weight, iterations=self.iterations,
            lr_initial=self.lr_initial, lr_after=self.lr_after,
            decay_at_iteration=self.decay_at_iteration, seed=self.seed,
        )


_DEFAULTS = RunConfig()
_TUPLE_FIELDS = {"content_layers", "style_layers", "style_weights"}
_INT_FIELDS = {"epochs", "batch_size", "embedding_size", "min_count", "iterations",
               "decay_at_iteration", "seed", "max_side"}


def default_data_dir() -> str:
    return os.environ.get("TEXTSTYLE_DATA_DIR", "textstyle-data")


def _parse_tuple(text, as_int: bool):
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    return tuple(int(p) if as_int else float(p) for p in parts)


def build_run_config(args) -> RunConfig:
    cfg = replace(_DEFAULTS, data_dir=default_data_dir())
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid config JSON in {args.config}: {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ParseError(f"config file {args.config} must hold a JSON object")
        cfg = apply_overrides(cfg, loaded)
    flag_overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return apply_overrides(cfg, flag_overrides)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    clean = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValidationError(f"unknown config field {key!r}")
        if key in _TUPLE_FIELDS:
            if isinstance(value, str):
                value = _parse_tuple(value, as_int=(key != "style_weights"))
            else:
                value = tuple(value)
        elif key in _INT_FIELDS:
            value = int(value)
        elif key != "data_dir":
            value = float(value)
        clean[key] = value
    return replace(cfg, **clean)


# ---------------------------------------------------------------------------
# artifact helpers


def _artifact(cfg: RunConfig, flag_value, name: str) -> str:
    return flag_value if flag_value else os.path.join(cfg.data_dir, name)


def _load_extractor(cfg: RunConfig, weights_path: str) -> FeatureExtractor:
    if os.path.exists(weights_path):
        return FeatureExtractor.from_file(weights_path, seed=cfg.seed)
    return FeatureExtractor.from_seed(cfg.seed)


def _image_loader(manifest_path: str, cfg: RunConfig):
    root = os.path.dirname(os.path.abspath(manifest_path))
    def load(sample):
        return corpus.load_image(os.path.join(root, sample.image_path), cfg.max_side)
    return load


def _load_retrieval_model(cfg: RunConfig, vocab_path, heads_path) -> embedding.RetrievalModel:
    text_model = textenc.load_text_encoder(vocab_path)
    return embedding.load_heads(heads_path, text_model)


# ---------------------------------------------------------------------------
# commands


def cmd_build_index(args) -> int:
    cfg = build_run_config(args)
    samples = corpus.load_manifest(args.manifest)
    if not samples:
        raise ValidationError(f"manifest {args.manifest} holds no samples")
    train_split, val_split, test_split = corpus.split_corpus(samples, cfg.seed)
    text_model = textenc.build_text_encoder(train_split, cfg.min_count)
    loader = _image_loader(args.manifest, cfg)
    extractor = _load_extractor(cfg, _artifact(cfg, args.weights, "weights.bin"))

    if args.heads_in:
        model = embedding.load_heads(args.heads_in, text_model)
    else:
        text_head, vis_head, _ = embedding.train(
            train_split, text_model, extractor, cfg.train_config(), loader
        )
        model = embedding.RetrievalModel(text_model, text_head, vis_head, cfg.seed)

    index = embedding.build_index(samples, model, extractor, loader)

    os.makedirs(cfg.data_dir, exist_ok=True)
    vocab_out = _artifact(cfg, args.vocab_out, "vocab.json")
    heads_out = _artifact(cfg, args.heads_out, "heads.bin")
    index_out = _artifact(cfg, args.index_out, "index.bin")
    weights_out = _artifact(cfg, args.weights, "weights.bin")
    textenc.save_text_encoder(text_model, vocab_out)
    embedding.save_heads(model, heads_out)
    embedding.save_index(index, index_out)
    if not os.path.exists(weights_out):
        extractor.save_weights(weights_out)
    print(f"samples {len(samples)} (train {len(train_split)} / val {len(val_split)} "
          f"/ test {len(test_split)})")
    print(f"vocabulary comment={text_model.comment_vocab.size} "
          f"title={text_model.title_vocab.size}")
    print(f"index rows {len(index)} -> {index_out}")
    return 0


def cmd_train_retrieval(args) -> int:
    cfg = build_run_config(args)
    samples = corpus.load_manifest(args.manifest)
    train_split, _, _ = corpus.split_corpus(samples, cfg.seed)
    text_model = textenc.build_text_encoder(train_split, cfg.min_count)
    loader = _image_loader(args.manifest, cfg)
    extractor = _load_extractor(cfg, _artifact(cfg, args.weights, "weights.bin"))
    text_head, vis_head, curve = embedding.train(
        train_split, text_model, extractor, cfg.train_config(), loader
    )
    model = embedding.RetrievalModel(text_model, text_head, vis_head, cfg.seed)

    os.makedirs(cfg.data_dir, exist_ok=True)
    textenc.save_text_encoder(text_model, _artifact(cfg, args.vocab_out, "vocab.json"))
    embedding.save_heads(model, _artifact(cfg, args.heads_out, "heads.bin"))
    if args.curve_out:
        with open(args.curve_out, "w", encoding="utf-8") as fh:
            fh.write("epoch,mean_loss\n")
            for i, loss in enumerate(curve):
                fh.write(f"{i},{loss!r}\n")
    if curve:
        print(f"trained {cfg.epochs} epochs: loss {curve[0]:.6f} -> {curve[-1]:.6f}")
    else:
        print("trained 0 epochs")
    return 0


def cmd_eval_retrieval(args) -> int:
    cfg = build_run_config(args)
    samples = corpus.load_manifest(args.manifest)
    _, _, test_split = corpus.split_corpus(samples, cfg.seed)
    model = _load_retrieval_model(cfg, _artifact(cfg, args.vocab, "vocab.json"),
                                  _artifact(cfg, args.heads, "heads.bin"))
    index = embedding.load_index(_artifact(cfg, args.index, "index.bin"))
    if model.fingerprint != index.vocab_fingerprint:
        raise StaleArtifactError("index fingerprint does not match the vocabulary")
    # evaluation ranks against the test images only: restrict the index rows
    test_ids = {s.id for s in test_split}
    keep = [i for i, sid in enumerate(index.ids) if sid in test_ids]
    if len(keep) < len(test_ids):
        raise ValidationError("index is missing test-split images; rebuild it")
    sub = embedding.EmbeddingIndex(
        [index.ids[i] for i in keep], index.embeddings[keep],
        index.vocab_fingerprint, index.extractor_seed,
    )
    mr, r1, r5, r10 = embedding.evaluate(model, test_split, sub)
    print(f"MR {mr}")
    print(f"R@1 {r1:.4f}")
    print(f"R@5 {r5:.4f}")
    print(f"R@10 {r10:.4f}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = build_run_config(args)
    model = _load_retrieval_model(cfg, _artifact(cfg, args.vocab, "vocab.json"),
                                  _artifact(cfg, args.heads, "heads.bin"))
    index = embedding.load_index(_artifact(cfg, args.index, "index.bin"))
    results = embedding.rank(args.title or "", args.description or "", index,
                             model, args.k)
    for sid, score in results:
        print(f"{sid} {score:.6f}")
    return 0


def cmd_transfer(args) -> int:
    cfg = build_run_config(args)
    content = corpus.load_image(args.content, cfg.max_side)
    style = corpus.load_image(args.style, cfg.max_side)
    extractor = _load_extractor(cfg, _artifact(cfg, args.weights, "weights.bin"))
    style_cfg = cfg.style_config()
    image, history = transfer.synthesize(content, style, extractor, style_cfg)
    corpus.save_png(image, args.out)
    if args.csv:
        transfer.write_history_csv(history, style_cfg, args.csv)
    if history:
        last = history[-1]
        print(f"content {last.content:.6f} style {last.style:.6f} "
              f"tv {last.tv:.6f} total {last.total:.6f}")
    print(f"wrote {args.out}")
    return 0


def run_pipeline(cfg: RunConfig, manifest_path: str, content_path: str,
                 title: str, description: str, vocab=None, heads=None,
                 index_path=None, weights=None, on_progress=None):
    """Retrieve the best style image for the text, then synthesize.

    Shared by the CLI pipeline command and the HTTP service so both
    produce identical bytes for identical inputs. Returns
    ``(retrieved_id, image, history)``.
    """
    samples = corpus.load_manifest(manifest_path)
    model = _load_retrieval_model(cfg, vocab or os.path.join(cfg.data_dir, "vocab.json"),
                                  heads or os.path.join(cfg.data_dir, "heads.bin"))
    index = embedding.load_index(index_path or os.path.join(cfg.data_dir, "index.bin"))
    results = embedding.rank(title, description, index, model, k=1)
    best_id = results[0][0]
    by_id = {s.id: s for s in samples}
    if best_id not in by_id:
        raise StaleArtifactError(f"retrieved id {best_id} missing from manifest")

    loader = _image_loader(manifest_path, cfg)
    style = loader(by_id[best_id])
    content = corpus.load_image(content_path, cfg.max_side)
    extractor = _load_extractor(cfg, weights or os.path.join(cfg.data_dir, "weights.bin"))
    image, history = transfer.synthesize(content, style, extractor,
                                         cfg.style_config(), on_progress)
    return best_id, image, history


def cmd_pipeline(args) -> int:
    cfg = build_run_config(args)
    best_id, image, history = run_pipeline(
        cfg, args.manifest, args.content, args.title or "", args.description or "",
        vocab=args.vocab, heads=args.heads, index_path=args.index,
        weights=args.weights,
    )
    corpus.save_png(image, args.out)
    style_cfg = cfg.style_config()
    if args.csv:
        transfer.write_history_csv(history, style_cfg, args.csv)
    print(f"retrieved {best_id}")
    if history:
        last = history[-1]
        print(f"content {last.content:.6f} style {last.style:.6f} "
              f"tv {last.tv:.6f} total {last.total:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = build_run_config(args)
    app = create_app(
        data_dir=cfg.data_dir,
        manifest=args.manifest,
        run_config=cfg,
        ui_dir=args.ui_dir,
        worker_count=args.workers,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--data-dir", dest="data_dir",
                   help="artifact root (default: $TEXTSTYLE_DATA_DIR or ./textstyle-data)")
    p.add_argument("--seed", type=int, help=f"deterministic seed (default: {_DEFAULTS.seed})")
    p.add_argument("--max-side", dest="max_side", type=int,
                   help=f"downscale images to this longest side (default: {_DEFAULTS.max_side})")
    train_flags = [
        ("--epochs", "epochs", int),
        ("--learning-rate", "learning_rate", float),
        ("--batch-size", "batch_size", int),
        ("--embedding-size", "embedding_size", int),
        ("--margin", "margin", float),
        ("--min-count", "min_count", int),
    ]
    for flag, name, typ in train_flags:
        p.add_argument(flag, dest=name, type=typ,
                       help=f"(default: {getattr(_DEFAULTS, name)})")
    style_flags = [
        ("--content-weight", "content_weight", float),
        ("--tv-weight", "tv_weight", float),
        ("--iterations", "iterations", int),
        ("--lr-initial", "lr_initial", float),
        ("--lr-after", "lr_after", float),
        ("--decay-at-iteration", "decay_at_iteration", int),
    ]
    for flag, name, typ in style_flags:
        p.add_argument(flag, dest=name, type=typ,
                       help=f"(default: {getattr(_DEFAULTS, name)})")
    p.add_argument("--content-layers", dest="content_layers",
                   help=f"comma-separated (default: {','.join(map(str, _DEFAULTS.content_layers))})")
    p.add_argument("--style-layers", dest="style_layers",
                   help=f"comma-separated (default: {','.join(map(str, _DEFAULTS.style_layers))})")
    p.add_argument("--style-weights", dest="style_weights",
                   help=f"comma-separated (default: {','.join(map(lambda w: str(int(w)), _DEFAULTS.style_weights))})")


def _add_artifact_flags(p: argparse.ArgumentParser, outputs: bool) -> None:
    if outputs:
        p.add_argument("--vocab-out", dest="vocab_out", help="vocabulary JSON output path")
        p.add_argument("--heads-out", dest="heads_out", help="projection heads output path")
    else:
        p.add_argument("--vocab", help="vocabulary JSON path")
        p.add_argument("--heads", help="projection heads path")
    p.add_argument("--weights", help="extractor weights path (default: data_dir/weights.bin)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textstyle",
        description="text-driven artwork retrieval and style transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="build vocabulary, heads and retrieval index")
    p.add_argument("--manifest", required=True)
    _add_artifact_flags(p, outputs=True)
    p.add_argument("--index-out", dest="index_out", help="index output path")
    p.add_argument("--heads-in", dest="heads_in", help="reuse trained heads instead of training")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("train-retrieval", help="train the projection heads")
    p.add_argument("--manifest", required=True)
    _add_artifact_flags(p, outputs=True)
    p.add_argument("--curve-out", dest="curve_out", help="per-epoch loss CSV path")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_retrieval)

    p = sub.add_parser("eval-retrieval", help="median rank and recall@K on the test split")
    p.add_argument("--manifest", required=True)
    _add_artifact_flags(p, outputs=False)
    p.add_argument("--index", help="index path (default: data_dir/index.bin)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("retrieve", help="rank corpus images for a text query")
    p.add_argument("--title", default="")
    p.add_argument("--description", default="")
    p.add_argument("-k", type=int, default=5, help="(default: 5)")
    _add_artifact_flags(p, outputs=False)
    p.add_argument("--index", help="index path (default: data_dir/index.bin)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("transfer", help="style transfer between two image files")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--csv", help="loss history CSV path")
    p.add_argument("--weights", help="extractor weights path (default: data_dir/weights.bin)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("pipeline", help="retrieve a style image for the text, then transfer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--title", default="")
    p.add_argument("--description", default="")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--csv", help="loss history CSV path")
    _add_artifact_flags(p, outputs=False)
    p.add_argument("--index", help="index path (default: data_dir/index.bin)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--manifest", help="manifest path (default: data_dir/manifest.jsonl)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", dest="ui_dir", help="built web UI directory to serve at /app")
    p.add_argument("--workers", type=int, default=1, help="job worker threads (default: 1)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StaleArtifactError as exc:
        print(f"error: stale artifacts: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return 5


def entrypoint() -> None:
    sys.exit(main())
