#!/usr/bin/env python3
"""End-to-end demo: corpus, scaled generation plan, detection, score
correction and the learning-rate table, all under one output directory."""

import argparse
import csv
from pathlib import Path

import numpy as np

from forgerykit import pipeline as pl
from forgerykit import schedule as sch
from forgerykit.postprocess import CorrectionPolicy
from forgerykit.synthetic import make_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--images", type=int, default=200)
    p.add_argument("--divisor", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    out = Path(args.out)

    paths = make_corpus(out / "corpus", args.images, seed=args.seed)
    index = pl.scan_dataset(paths["images"], paths["labels"], paths["landmarks"])
    plan = pl.scaled_plan(args.divisor, seed=args.seed)
    (out / "plan.ini").write_text(pl.format_plan(plan))
    manifest = pl.execute_plan(plan, index, out / "generated", workers=args.workers)
    print(f"generated {len(manifest.samples)} samples; verify: {pl.verify_manifest(out / 'generated') or 'OK'}")

    rows = pl.run_detect(index, workers=args.workers)
    pl.write_detection_report(out / "detections.csv", rows)
    gen = np.random.default_rng(args.seed)
    with open(out / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "score"])
        for image_id, _ in rows:
            w.writerow([image_id, f"{gen.uniform(0.3, 0.7):.4f}"])
    summary = pl.run_postprocess(out / "scores.csv", out / "detections.csv", paths["landmarks"],
                                 out / "corrected.csv", CorrectionPolicy())
    print("post-processing:", summary)

    sched_rows = sch.emit_schedule(sch.stage_one(), sch.stage_two())
    sch.write_schedule_csv(out / "lr_schedule.csv", sched_rows)
    print(f"wrote {len(sched_rows)} schedule rows")


if __name__ == "__main__":
    main()
