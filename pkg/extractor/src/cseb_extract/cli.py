"""Command-line wrapper: one invocation extracts vocab, instances, manifest."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractorConfig, ModelLoadFailure, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cseb-extract",
        description="Extract masked-LM embeddings into .cseb files")
    p.add_argument("--model", required=True,
                   help="model name or local checkpoint directory")
    p.add_argument("--revision", default=None,
                   help="model revision to pin (hub models)")
    p.add_argument("--template", required=True,
                   help="cloze template with one <S> slot and one [MASK]")
    p.add_argument("--corpus", required=True,
                   help="text file, one instance per line")
    p.add_argument("--vocab-out", required=True)
    p.add_argument("--instances-out", required=True)
    p.add_argument("--texts-out", required=True)
    p.add_argument("--manifest-out", required=True)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--batch-size", type=int, default=16)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExtractorConfig(
            model=args.model, revision=args.revision, template=args.template,
            corpus=args.corpus, vocab_out=args.vocab_out,
            instances_out=args.instances_out, texts_out=args.texts_out,
            manifest_out=args.manifest_out, max_length=args.max_length,
            batch_size=args.batch_size)
        manifest = run(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelLoadFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"vocab: {manifest['vocab_rows']} rows x dim {manifest['dim']} "
          f"-> {args.vocab_out}")
    print(f"instances: {manifest['instance_rows']} rows "
          f"({manifest['truncated']} truncated, "
          f"{len(manifest['skipped'])} skipped) -> {args.instances_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
