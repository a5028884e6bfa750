#!/usr/bin/env python3
"""Time a single-recipe generation run over a synthetic corpus."""

import argparse
import tempfile
import time
from pathlib import Path

from forgerykit import pipeline as pl
from forgerykit.synthetic import make_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--recipe", default="binarize")
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--sources", type=int, default=40)
    p.add_argument("--workers", type=int, default=4)
    args = p.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        paths = make_corpus(Path(tmp) / "src", args.sources, args.size, seed=1)
        index = pl.scan_dataset(paths["images"], paths["labels"], paths["landmarks"])
        plan = pl.GenerationPlan([pl.PlanEntry(args.recipe, args.count)], 1)
        t0 = time.perf_counter()
        m = pl.execute_plan(plan, index, Path(tmp) / "out", workers=args.workers)
        dt = time.perf_counter() - t0
    print(f"{args.recipe}: {len(m.samples)} images in {dt:.2f}s = {len(m.samples) / dt:.1f} images/s "
          f"({args.size}px, {args.workers} workers)")


if __name__ == "__main__":
    main()
