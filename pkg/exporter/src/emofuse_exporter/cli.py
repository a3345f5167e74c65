"""Command-line wrapper: emofuse-export --manifest m.json --out bundle.emob"""

from __future__ import annotations

import argparse
import sys

from .export import export_embeddings
from .manifest import load_manifest


def run(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="emofuse-export",
        description="Export frozen-encoder embeddings for audio + transcripts into an EMOB bundle.",
    )
    parser.add_argument("--manifest", required=True, help="JSON export manifest")
    parser.add_argument("--out", required=True, help="output bundle path")
    parser.add_argument("--device", help="override the manifest's device (e.g. cpu)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        manifest = load_manifest(args.manifest)
        summaries = export_embeddings(manifest, args.out, device=args.device)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for row in summaries:
        print(
            f"{row['id']}: {row['duration']:.2f}s -> "
            f"{row['n_frames']} frames, {row['n_subwords']} subwords"
        )
    print(f"wrote {len(summaries)} segments to {args.out}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
