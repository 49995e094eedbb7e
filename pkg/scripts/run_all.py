"""Run every worked example and print a pass/fail table.

    python scripts/run_all.py --out results/
"""

from __future__ import annotations

import argparse
import sys
import time

from dirbundle.experiments import EXAMPLE_IDS, ExperimentConfig, PipelineError, reproduce


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("ids", nargs="*", default=list(EXAMPLE_IDS), help="example ids (default: all)")
    parser.add_argument("--out", help="write each report and its artifacts to OUT/<id>/")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args(argv)

    failed = 0
    for ex in args.ids:
        cfg = ExperimentConfig(ex, seed=args.seed, out=f"{args.out}/{ex}" if args.out else None)
        start = time.perf_counter()
        try:
            report = reproduce(cfg)
        except PipelineError as exc:
            report = exc.report
        bad = [k for k, v in report.checks.items() if not v]
        failed += not report.passed
        status = "PASS" if report.passed else "FAIL"
        print(f"{ex:20s} {status}  {time.perf_counter() - start:7.1f}s  {', '.join(bad)}", flush=True)
    return 0 if failed == 0 else 3


if __name__ == "__main__":
    sys.exit(main())
