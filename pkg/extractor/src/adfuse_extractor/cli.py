"""Command line: extract embeddings for a job manifest.

Exit codes: 0 success, 1 extraction failure, 2 usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ExtractionError
from .features import FrameFeatureExtractor
from .jobs import DEFAULT_N_FRAMES, load_jobs, run_jobs
from .textembed import TextEmbedder

logger = logging.getLogger("adfuse_extractor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adfuse-extract",
        description="Extract frame and text embeddings for ad videos.")
    parser.add_argument("--jobs", required=True,
                        help="job manifest (JSON lines)")
    parser.add_argument("--weights", required=True,
                        help="backbone state-dict file (.pt)")
    parser.add_argument("--wordvecs", required=True,
                        help="word-vector table (.vec)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--n-frames", type=int, default=DEFAULT_N_FRAMES,
                        dest="n_frames",
                        help="frames per video for jobs that do not set it")
    parser.add_argument("--lockfile",
                        help="verify model hashes against this lockfile")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    expected_frame = expected_text = None
    if args.lockfile:
        lock = json.loads(Path(args.lockfile).read_text(encoding="utf-8"))
        expected_frame = lock.get("frame_model", {}).get("sha256")
        expected_text = lock.get("word_vectors", {}).get("sha256")
    try:
        jobs = load_jobs(args.jobs, default_n_frames=args.n_frames)
        frame_extractor = FrameFeatureExtractor(args.weights, expected_frame)
        text_embedder = TextEmbedder(args.wordvecs, expected_text)
        manifest = run_jobs(jobs, frame_extractor, text_embedder, args.out)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"extracted {len(jobs)} ads -> {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
