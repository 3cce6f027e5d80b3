#!/usr/bin/env python3
"""End-to-end demo: synthesize one nonlinear case, explain it, print the report.

Usage: python scripts/demo_explain.py [--out runs/demo] [--seed 0] [--variant tanh]
"""

import argparse
from pathlib import Path

from pieshap import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variant", default="tanh")
    args = ap.parse_args()

    out = Path(args.out)
    cases = out / "cases"
    rc = cli.main([
        "synth", "--count", "1", "--n-concepts", "10", "--n-classes", "10",
        "--feature-dim", "16", "--nonlinearity", "2.0",
        "--seed", str(args.seed), "--out", str(cases),
    ])
    if rc:
        return rc
    case_path = next(cases.glob("*.case.json"))
    return cli.main([
        "explain", str(case_path), "--variant", args.variant,
        "--seed", str(args.seed), "--out", str(out / "explain"), "--plot",
    ])


if __name__ == "__main__":
    raise SystemExit(main())
