"""Command-line entry point: ``forgerykit <subcommand> ...``.

Exit codes: 0 success, 1 bad input, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import pipeline, schedule
from .errors import InputError, ParameterError
from .postprocess import CorrectionPolicy

log = logging.getLogger("forgerykit")


def cmd_scan(args) -> int:
    index = pipeline.scan_dataset(args.input, args.labels, args.landmarks)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            pipeline.write_index_csv(fh, index)
    else:
        pipeline.write_index_csv(sys.stdout, index)
    for row in index.report:
        print(f"{row['problem']}: {row['image_id']} {row['detail']}".rstrip(), file=sys.stderr)
    print(f"indexed {len(index)} images, {len(index.report)} flagged", file=sys.stderr)
    return 0


def cmd_generate(args) -> int:
    plan = pipeline.load_plan(args.plan)
    # CLI flags take precedence over the plan file
    if args.seed is not None:
        plan.master_seed = args.seed
    source_dir = args.input or plan.source_dir
    labels = args.labels or plan.labels
    landmarks = args.landmarks or plan.landmarks
    if not source_dir or not labels:
        raise InputError("generate needs a source directory and labels file (flags or plan)")
    index = pipeline.scan_dataset(source_dir, labels, landmarks)
    t0 = time.perf_counter()
    manifest = pipeline.execute_plan(plan, index, args.out, workers=args.workers)
    dt = time.perf_counter() - t0
    n = len(manifest.samples)
    print(f"generated {n} samples, {len(manifest.skips)} skips in {dt:.2f}s "
          f"({n / dt if dt else 0:.1f} images/s)")
    return 0


def cmd_augment(args) -> int:
    n = pipeline.run_augment(args.input, args.out, args.seed)
    print(f"augmented {n} images")
    return 0


def cmd_detect(args) -> int:
    params = pipeline.DetectorParams(args.scale_factor, args.min_neighbors, args.min_size)
    rows = pipeline.run_detect(args.input, args.cascade, params, workers=args.workers)
    pipeline.write_detection_report(args.report, rows)
    print(f"detected {sum(len(d) for _, d in rows)} faces in {len(rows)} images")
    return 0


def cmd_postprocess(args) -> int:
    try:
        policy = CorrectionPolicy(args.tau, args.delta)
    except ParameterError as exc:
        raise InputError(str(exc)) from None
    s = pipeline.run_postprocess(args.scores, args.report, args.landmarks, args.out, policy)
    print(f"raised={s['raised']} lowered={s['lowered']} untouched={s['untouched']} "
          f"absent={s['absent']}")
    return 0


def cmd_schedule(args) -> int:
    try:
        s1 = schedule.stage_one(args.stage1_epochs, args.steps_per_epoch)
        s2 = schedule.stage_two(args.stage2_epochs, args.steps_per_epoch)
    except ParameterError as exc:
        raise InputError(str(exc)) from None
    rows = schedule.emit_schedule(s1, s2)
    schedule.write_schedule_csv(args.out, rows)
    print(f"wrote {len(rows)} schedule rows to {args.out}")
    return 0


def cmd_verify(args) -> int:
    problems = pipeline.verify_manifest(args.out)
    for p in problems:
        print(p)
    print("manifest OK" if not problems else f"{len(problems)} problems")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forgerykit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="index a labelled image directory")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--landmarks")
    s.add_argument("--out", help="index CSV (default stdout)")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("generate", help="run a generation plan")
    s.add_argument("--plan", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--in", dest="input")
    s.add_argument("--labels")
    s.add_argument("--landmarks")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("augment", help="apply the online augmentation chain")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("detect", help="Haar face detection report")
    s.add_argument("--cascade", help="cascade XML (default: bundled frontal-face model)")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--scale-factor", type=float, default=pipeline.DEFAULT_SCALE_FACTOR)
    s.add_argument("--min-neighbors", type=int, default=pipeline.DEFAULT_MIN_NEIGHBORS)
    s.add_argument("--min-size", type=int, default=pipeline.DEFAULT_MIN_SIZE)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("postprocess", help="correct borderline scores")
    s.add_argument("--scores", required=True)
    s.add_argument("--report")
    s.add_argument("--landmarks")
    s.add_argument("--tau", type=float, default=0.15)
    s.add_argument("--delta", type=float, default=0.10)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_postprocess)

    s = sub.add_parser("schedule", help="emit the two-stage learning-rate table")
    s.add_argument("--stage1-epochs", type=int, default=35)
    s.add_argument("--stage2-epochs", type=int, default=15)
    s.add_argument("--steps-per-epoch", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("verify", help="check an output directory against its manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
