"""pieshap-bridge: build case files from images and answer coalition requests."""

from __future__ import annotations

import argparse
import sys

from pieshap.fileformat import MissingEntryError, NumericalError, SchemaError

from .bridge import BridgeJob, answer_requests, build_case
from .classifier import CLASSIFIERS
from .segmentation import SegmentationError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems -> exit code 1, like the core CLI
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="pieshap-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-case", help="segment an image and emit a job directory")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="job directory to create")
    p.add_argument("--case-id", default=None)
    p.add_argument("--classifier", choices=CLASSIFIERS, default="resnet18-rand")
    p.add_argument("--n-classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0,
                   help="classifier init and coalition sampling seed")
    p.add_argument("--mask-source", choices=("felzenszwalb", "slic"),
                   default="felzenszwalb")
    p.add_argument("--max-concepts", type=int, default=8)
    p.add_argument("--max-coalitions", type=int, default=1024)
    p.add_argument("--image-size", type=int, default=128)

    p = sub.add_parser("answer-requests", help="answer a core request file")
    p.add_argument("job_dir")
    p.add_argument("request")
    p.add_argument("--out", required=True, help="response file to write")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "build-case":
            job = BridgeJob(
                image=args.image,
                classifier_id=args.classifier,
                n_classes=args.n_classes,
                classifier_seed=args.seed,
                mask_source=args.mask_source,
                max_concepts=args.max_concepts,
                max_coalitions=args.max_coalitions,
                sample_seed=args.seed,
                image_size=args.image_size,
            )
            path = build_case(job, args.out, case_id=args.case_id)
            print(f"wrote case file {path}")
        else:
            path = answer_requests(args.job_dir, args.request, args.out)
            print(f"wrote response file {path}")
        return 0
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, SegmentationError) as e:
        if isinstance(e, SchemaError):
            print(f"schema error: {e}", file=sys.stderr)
            return 2
        print(f"error: {e}", file=sys.stderr)
        return 1
    except MissingEntryError as e:
        print(f"missing entries: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
