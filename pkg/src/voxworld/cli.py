"""Batch command line: extract, dataset, train, talk, eval, serve, config.

Errors exit nonzero with one machine-readable JSON object on stderr. The
corpus root comes from --corpus, the FT_DATA_DIR environment variable, or
./corpus, in that order. --config accepts a JSON or TOML file with
"feature_config" / "train_config" tables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from .corpus import HEAD_ORDER, Corpus, export_bundle
from .errors import VoxworldError
from .features import FeatureConfig, visualization_bundle
from .model import TrainConfig, evaluate, load_heads, save_heads, train_all_heads
from .world import PlayerMessage, WorldSession, load_scene


def load_configs(path: str | None) -> tuple[FeatureConfig, TrainConfig]:
    if path is None:
        return FeatureConfig(), TrainConfig()
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            try:
                import tomllib as toml_parser  # py >= 3.11
            except ImportError:
                import tomli as toml_parser
            doc = toml_parser.load(fh)
        else:
            doc = json.load(fh)
    return (FeatureConfig(**doc.get("feature_config", {})),
            TrainConfig(**doc.get("train_config", {})))


def corpus_root(args) -> str:
    return args.corpus or os.environ.get("FT_DATA_DIR") or "./corpus"


def cmd_extract(args) -> int:
    from .audio import decode_wav, resample
    feature_cfg, _ = load_configs(args.config)
    with open(args.wav, "rb") as fh:
        clip = decode_wav(fh.read(), source_id=os.path.basename(args.wav))
    clip = resample(clip, feature_cfg.sample_rate)
    bundle = visualization_bundle(clip, feature_cfg)
    with open(args.out, "w") as fh:
        json.dump(bundle.to_json_dict(), fh)
    print(f"wrote plot data for {clip.source_id} to {args.out}")
    return 0


def cmd_dataset(args) -> int:
    corpus = Corpus.load(args.corpus_dir)
    bundle = corpus.build_dataset(args.head)
    out = args.out or os.path.join(args.corpus_dir, "datasets", args.head)
    export_bundle(bundle, out)
    print(f"{args.head}: train {bundle.train_data.shape[0]} rows, "
          f"test {bundle.test_data.shape[0]} rows -> {out}")
    return 0


def cmd_train(args) -> int:
    _, train_cfg = load_configs(args.config)
    if args.seed is not None:
        train_cfg.seed = args.seed
    corpus = Corpus.load(args.corpus_dir)
    heads = train_all_heads(corpus, train_cfg)
    save_heads(heads, args.out)
    corpus.mark_corrections_consumed()
    print(f"{'head':<18} {'train':>7} {'test':>7}")
    for name in HEAD_ORDER:
        th = heads[name]
        print(f"{name:<18} {th.train_accuracy:>7.3f} {th.test_accuracy:>7.3f}")
    print(f"saved heads to {args.out}")
    return 0


def cmd_talk(args) -> int:
    from .audio import decode_wav
    heads = load_heads(args.heads)
    scene = load_scene(args.scene)
    corpus = Corpus.load(corpus_root(args))
    session = WorldSession(scene, corpus)
    with open(args.wav, "rb") as fh:
        clip_id = corpus.add_clip(fh.read())
    turn = session.handle_turn(heads, PlayerMessage(clip_id, args.point))
    print(json.dumps(turn.to_json_dict(), indent=2))
    return 0


def cmd_eval(args) -> int:
    heads = load_heads(args.heads)
    corpus = Corpus.load(args.corpus_dir)
    for name in HEAD_ORDER:
        bundle = corpus.build_dataset(name)
        result = evaluate(heads[name], bundle)
        confusion = result["confusion"]
        present = sorted(set(bundle.test_labels.tolist()))
        print(f"\n{name}: accuracy {result['accuracy']:.3f}")
        if present:
            header = "true\\pred " + " ".join(f"{c:>4}" for c in present)
            print(header)
            for r in present:
                row = " ".join(f"{confusion[r, c]:>4}" for c in present)
                print(f"{r:>9} {row}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionService, create_app
    feature_cfg, train_cfg = load_configs(args.config)
    service = SessionService(args.corpus_dir, scene_path=args.scene,
                             feature_cfg=feature_cfg, train_cfg=train_cfg)
    uvicorn.run(create_app(service), host=args.host, port=args.port)
    return 0


def cmd_config_show(args) -> int:
    feature_cfg, train_cfg = load_configs(args.config)
    print(json.dumps({"feature_config": asdict(feature_cfg),
                      "train_config": asdict(train_cfg),
                      "config_hash": feature_cfg.config_hash()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxworld")
    parser.add_argument("--config", help="JSON or TOML file with config tables")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="plot-data bundle for one wav file")
    p.add_argument("wav")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dataset", help="build and export one head's four-file bundle")
    p.add_argument("corpus_dir")
    p.add_argument("--head", required=True, choices=list(HEAD_ORDER))
    p.add_argument("--out")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train all seven heads from a corpus")
    p.add_argument("corpus_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("talk", help="run one talking-mode exchange")
    p.add_argument("heads")
    p.add_argument("scene")
    p.add_argument("wav")
    p.add_argument("--point", type=int, default=None)
    p.add_argument("--corpus", help="corpus root (default FT_DATA_DIR or ./corpus)")
    p.set_defaults(func=cmd_talk)

    p = sub.add_parser("eval", help="confusion matrices per head")
    p.add_argument("heads")
    p.add_argument("corpus_dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("corpus_dir")
    p.add_argument("--scene")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("config", help="configuration utilities")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    show = config_sub.add_parser("show", help="print effective configuration")
    show.set_defaults(func=cmd_config_show)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VoxworldError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc),
                          "detail_path": getattr(exc, "field_path", None)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"code": "io_failure", "message": str(exc),
                          "detail_path": None}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
