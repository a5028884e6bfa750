"""Batch orchestration: corpus scanning, generation plans, seeded parallel
execution with a JSONL manifest, detection reports and score correction."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import imaging as im
from .errors import (InputError, PlanError, RecipeInapplicable,
                     UnfulfillableEntry)
from .haar import (DEFAULT_MIN_NEIGHBORS, DEFAULT_MIN_SIZE, DEFAULT_SCALE_FACTOR,
                   Detection, detect_multiscale, load_cascade)
from .imaging import Rect
from .landmarks import LandmarkSet, load_landmark_dir
from .postprocess import CorrectionPolicy, batch_correct
from .recipes import RECIPES, RecipeParams, apply_recipe, online_augment, override_params
from .rng import DeterministicRng, mix64

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
LABELS = ("real", "fake")
SOURCE_FILTERS = ("real", "fake", "any")
MANIFEST_NAME = "manifest.jsonl"
MAX_ATTEMPTS = 32

# training-set composition of the second fine-tuning stage
PAPER_COUNTS = {"cutout": 40_000, "crop": 10_000, "overlay": 10_000,
                "cartoon": 10_000, "sketch": 5_000, "binarize": 5_000}


# --- corpus ---------------------------------------------------------------

@dataclass
class SourceItem:
    image_id: str
    path: str
    label: str | None
    width: int
    height: int
    channels: int
    landmarks: LandmarkSet | None = None


@dataclass
class SourceIndex:
    items: list = field(default_factory=list)
    report: list = field(default_factory=list)  # {"image_id", "problem"}

    def __len__(self):
        return len(self.items)


def read_labels(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: labels file not found")
    labels: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "label"} <= set(reader.fieldnames):
            raise InputError(f"{path}: expected header image_id,label")
        for row in reader:
            image_id, label = (row["image_id"] or "").strip(), (row["label"] or "").strip().lower()
            if image_id in labels:
                raise InputError(f"{path}:{reader.line_num}: duplicate image id {image_id!r}")
            if label not in LABELS:
                raise InputError(f"{path}:{reader.line_num}: label must be real or fake, got {label!r}")
            labels[image_id] = label
    return labels


def list_images(root) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def scan_dataset(root, labels_path, landmarks_path=None) -> SourceIndex:
    """Index every decodable image under ``root`` with its label.

    Undecodable and unlabeled files are listed in ``index.report``;
    unlabeled images stay in the index with ``label=None``.
    """
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"{root}: not a directory")
    labels = read_labels(labels_path)
    sidecars = load_landmark_dir(landmarks_path) if landmarks_path else {}
    index = SourceIndex()
    for path in list_images(root):
        image_id = path.relative_to(root).as_posix()
        try:
            img = im.read_image(path)
        except InputError as exc:
            index.report.append({"image_id": image_id, "problem": "undecodable", "detail": str(exc)})
            continue
        label = labels.get(image_id)
        if label is None:
            index.report.append({"image_id": image_id, "problem": "unlabeled", "detail": ""})
        index.items.append(SourceItem(image_id, str(path), label, img.shape[1], img.shape[0],
                                      im.channels(img), sidecars.get(image_id)))
    return index


def write_index_csv(fh, index: SourceIndex) -> None:
    w = csv.writer(fh)
    w.writerow(["image_id", "label", "width", "height", "channels", "landmarks"])
    for it in index.items:
        w.writerow([it.image_id, it.label or "", it.width, it.height, it.channels,
                    int(it.landmarks is not None)])


# --- plans ----------------------------------------------------------------

@dataclass
class PlanEntry:
    recipe: str
    count: int
    source_filter: str = "any"
    params: dict = field(default_factory=dict)
    stage: str | None = None

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise PlanError(f"unknown recipe {self.recipe!r}")
        if self.count < 0:
            raise PlanError(f"{self.recipe}: count must be >= 0")
        if self.source_filter not in SOURCE_FILTERS:
            raise PlanError(f"{self.recipe}: source must be one of {SOURCE_FILTERS}")


@dataclass
class GenerationPlan:
    entries: list
    master_seed: int = 0
    source_dir: str | None = None
    labels: str | None = None
    landmarks: str | None = None

    def digest(self) -> str:
        body = {"seed": self.master_seed, "entries": [asdict(e) for e in self.entries]}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def scaled_plan(divisor: int = 1, seed: int = 0) -> GenerationPlan:
    return GenerationPlan([PlanEntry(r, n // divisor) for r, n in PAPER_COUNTS.items()], seed)


_ENTRY_KEYS = {"recipe", "count", "source", "stage"}


def parse_plan(text: str) -> GenerationPlan:
    """Parse an INI-style plan.

    ``[plan]`` holds ``seed``, ``source_dir``, ``labels`` and ``landmarks``.
    Every other section is one entry; its recipe is the ``recipe`` key or the
    section name up to an optional ``:suffix`` (``[cutout:fake]``). Keys other
    than ``count``, ``source`` and ``stage`` override recipe parameters.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise PlanError(f"malformed plan: {exc}") from None
    g = cp["plan"] if cp.has_section("plan") else {}
    try:
        seed = int(g.get("seed", "0"))
    except ValueError:
        raise PlanError("plan seed must be an integer") from None
    entries = []
    for name in cp.sections():
        if name == "plan":
            continue
        sec = cp[name]
        recipe = sec.get("recipe", name.split(":", 1)[0]).strip()
        try:
            count = int(sec.get("count", "0"))
        except ValueError:
            raise PlanError(f"[{name}]: count must be an integer") from None
        params = {k: v for k, v in sec.items() if k not in _ENTRY_KEYS}
        entries.append(PlanEntry(recipe, count, sec.get("source", "any").strip(), params,
                                 sec.get("stage")))
    return GenerationPlan(entries, seed, g.get("source_dir"), g.get("labels"), g.get("landmarks"))


def load_plan(path) -> GenerationPlan:
    path = Path(path)
    if not path.is_file():
        raise PlanError(f"{path}: plan file not found")
    plan = parse_plan(path.read_text())
    for key in ("source_dir", "labels", "landmarks"):
        value = getattr(plan, key)
        if value and not Path(value).is_absolute():
            setattr(plan, key, str(path.parent / value))
    return plan


def format_plan(plan: GenerationPlan) -> str:
    lines = ["[plan]", f"seed = {plan.master_seed}"]
    for key in ("source_dir", "labels", "landmarks"):
        if getattr(plan, key):
            lines.append(f"{key} = {getattr(plan, key)}")
    for i, e in enumerate(plan.entries):
        lines += ["", f"[{e.recipe}:{i}]", f"count = {e.count}", f"source = {e.source_filter}"]
        if e.stage:
            lines.append(f"stage = {e.stage}")
        lines += [f"{k} = {v}" for k, v in e.params.items()]
    return "\n".join(lines) + "\n"


# --- execution ------------------------------------------------------------

@dataclass
class RunManifest:
    header: dict
    records: list

    @property
    def samples(self):
        return [r for r in self.records if r["type"] == "sample"]

    @property
    def skips(self):
        return [r for r in self.records if r["type"] == "skip"]


def entry_pool(entry: PlanEntry, index: SourceIndex) -> list[int]:
    needs_lms = RECIPES[entry.recipe].needs_landmarks
    pool = []
    for i, it in enumerate(index.items):
        if entry.source_filter != "any" and it.label != entry.source_filter:
            continue
        if needs_lms and it.landmarks is None:
            continue
        pool.append(i)
    return pool


def resolve_params(entry: PlanEntry, base: RecipeParams):
    field_name = RECIPES[entry.recipe].params_field
    try:
        return override_params(getattr(base, field_name), entry.params)
    except (ValueError, TypeError) as exc:
        raise PlanError(f"{entry.recipe}: bad parameter override ({exc})") from None


_CTX: dict = {}


def _init_worker(ctx):
    _CTX.clear()
    _CTX.update(ctx)


def _run_item(task):
    """Generate one planned item, retrying other sources on inapplicable ones."""
    e, i = task
    ctx = _CTX
    entry, params, pool = ctx["entries"][e], ctx["params"][e], ctx["pools"][e]
    items, out_dir = ctx["items"], Path(ctx["out_dir"])
    item_rng = DeterministicRng(ctx["seed"], mix64(e, i))
    records = []
    for attempt in range(MAX_ATTEMPTS):
        pick = DeterministicRng(item_rng.seed, mix64(attempt, 0)).generator()
        src = items[pool[int(pick.integers(len(pool)))]]
        recipe_rng = DeterministicRng(item_rng.seed, mix64(attempt, 1))
        base = {"entry": e, "item": i, "attempt": attempt, "recipe": entry.recipe,
                "source_id": src.image_id, "source_label": src.label,
                "seed": item_rng.seed, "recipe_seed": recipe_rng.seed, "stage": entry.stage}
        try:
            img = im.read_image(src.path)
            sample = apply_recipe(entry.recipe, img, params, recipe_rng, src.landmarks,
                                  src.image_id)
        except (RecipeInapplicable, InputError) as exc:
            records.append({"type": "skip", **base, "reason": str(exc)})
            continue
        rel = f"{e:02d}_{entry.recipe}/{i:06d}.png"
        data = im.write_image(out_dir / rel, sample.image)
        records.append({"type": "sample", **base, "output": rel, "label": sample.label,
                        "params": sample.params_used,
                        "sha256": hashlib.sha256(data).hexdigest()})
        return records
    raise PlanError(f"entry {e} ({entry.recipe}) item {i}: no applicable source "
                    f"after {MAX_ATTEMPTS} attempts")


def execute_plan(plan: GenerationPlan, index: SourceIndex, out_dir, workers: int = 1,
                 base_params: RecipeParams | None = None) -> RunManifest:
    """Run every plan entry and write ``manifest.jsonl`` last, atomically.

    Outputs depend only on the plan, its seed and the corpus, never on
    ``workers``.
    """
    base_params = base_params or RecipeParams()
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise InputError(f"{out_dir}: output directory is not empty")

    pools, params = [], []
    for e, entry in enumerate(plan.entries):
        pool = entry_pool(entry, index)
        if entry.count > 0 and not pool:
            raise UnfulfillableEntry(
                f"entry {e} ({entry.recipe}, source={entry.source_filter}): empty source pool")
        pools.append(pool)
        params.append(resolve_params(entry, base_params))

    out_dir.mkdir(parents=True, exist_ok=True)
    for e, entry in enumerate(plan.entries):
        if entry.count:
            (out_dir / f"{e:02d}_{entry.recipe}").mkdir(exist_ok=True)

    ctx = {"entries": plan.entries, "params": params, "pools": pools,
           "items": index.items, "out_dir": str(out_dir), "seed": plan.master_seed}
    tasks = [(e, i) for e, entry in enumerate(plan.entries) for i in range(entry.count)]
    if workers <= 1:
        _init_worker(ctx)
        results = [_run_item(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            results = list(pool.map(_run_item, tasks, chunksize=chunk))

    records = [r for group in results for r in group]
    records.sort(key=lambda r: (r["entry"], r["item"], r["attempt"]))
    used: dict[int, set] = {}
    for r in records:
        if r["type"] == "sample":
            seen = used.setdefault(r["entry"], set())
            r["reused_source"] = r["source_id"] in seen
            seen.add(r["source_id"])

    header = {
        "type": "header", "tool": "forgerykit", "version": __version__,
        "plan_hash": plan.digest(), "master_seed": plan.master_seed,
        "config": [{"recipe": en.recipe, "count": en.count, "source": en.source_filter,
                    "stage": en.stage, "pool_size": len(pl), "params": asdict(pa)}
                   for en, pl, pa in zip(plan.entries, pools, params)],
    }
    manifest = RunManifest(header, records)
    write_manifest(out_dir / MANIFEST_NAME, manifest)
    n_skip = len(manifest.skips)
    log.info("generated %d samples (%d skips) into %s", len(records) - n_skip, n_skip, out_dir)
    return manifest


def write_manifest(path, manifest: RunManifest) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for rec in [manifest.header, *manifest.records]:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_manifest(path) -> RunManifest:
    lines = [json.loads(ln) for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or lines[0].get("type") != "header":
        raise InputError(f"{path}: manifest has no header line")
    return RunManifest(lines[0], lines[1:])


def verify_manifest(out_dir) -> list[str]:
    """Problems found comparing the output tree against its manifest."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir / MANIFEST_NAME)
    problems = []
    listed = set()
    for r in manifest.samples:
        listed.add(r["output"])
        f = out_dir / r["output"]
        if not f.is_file():
            problems.append(f"missing file {r['output']}")
        elif hashlib.sha256(f.read_bytes()).hexdigest() != r["sha256"]:
            problems.append(f"digest mismatch {r['output']}")
    for f in out_dir.rglob("*"):
        rel = f.relative_to(out_dir).as_posix()
        if f.is_file() and rel != MANIFEST_NAME and rel not in listed:
            problems.append(f"unlisted file {rel}")
    counts: dict[int, int] = {}
    for r in manifest.samples:
        counts[r["entry"]] = counts.get(r["entry"], 0) + 1
    for e, cfg in enumerate(manifest.header["config"]):
        if counts.get(e, 0) != cfg["count"]:
            problems.append(f"entry {e}: {counts.get(e, 0)} samples, planned {cfg['count']}")
    return problems


# --- online augmentation preview -----------------------------------------

def run_augment(in_dir, out_dir, seed: int) -> int:
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = 0
    for i, path in enumerate(list_images(in_dir)):
        try:
            img = im.read_image(path)
        except InputError as exc:
            log.warning("skipping %s", exc)
            continue
        out = online_augment(img, DeterministicRng(seed, i))
        rel = path.relative_to(in_dir).with_suffix(".png")
        (out_dir / rel).parent.mkdir(parents=True, exist_ok=True)
        im.write_image(out_dir / rel, out)
        n += 1
    return n


# --- detection reports ----------------------------------------------------

@dataclass(frozen=True)
class DetectorParams:
    scale_factor: float = DEFAULT_SCALE_FACTOR
    min_neighbors: int = DEFAULT_MIN_NEIGHBORS
    min_size: int = DEFAULT_MIN_SIZE


def _detect_one(args):
    image_id, path, cascade_path, params = args
    model = _cached_model(cascade_path)
    img = im.read_image(path)
    return image_id, detect_multiscale(model, img, params.scale_factor,
                                       params.min_neighbors, params.min_size)


_MODELS: dict = {}


def _cached_model(cascade_path):
    if cascade_path not in _MODELS:
        _MODELS[cascade_path] = load_cascade(cascade_path)
    return _MODELS[cascade_path]


def run_detect(images, cascade_path=None, params: DetectorParams = DetectorParams(),
               workers: int = 1) -> list:
    """Detect faces in a directory (or ``SourceIndex``).

    Returns ``[(image_id, [Detection, ...]), ...]`` sorted by image id.
    """
    model = load_cascade(cascade_path)  # fail fast on a bad cascade
    _MODELS[cascade_path] = model
    if isinstance(images, SourceIndex):
        jobs = [(it.image_id, it.path) for it in images.items]
    else:
        root = Path(images)
        if not root.is_dir():
            raise InputError(f"{root}: not a directory")
        jobs = []
        for p in list_images(root):
            jobs.append((p.relative_to(root).as_posix(), str(p)))
    args = [(iid, path, cascade_path, params) for iid, path in sorted(jobs)]
    if workers <= 1:
        rows = [_detect_one(a) for a in args]
    else:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_detect_one, args))
    return rows


def format_boxes(dets) -> str:
    return ";".join(f"{d.box.x} {d.box.y} {d.box.w} {d.box.h} {d.neighbors}" for d in dets)


def write_detection_report(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "n_faces", "boxes"])
        for image_id, dets in rows:
            w.writerow([image_id, len(dets), format_boxes(dets)])


def read_detection_report(path) -> dict[str, list]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: detection report not found")
    out: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "n_faces", "boxes"} <= set(reader.fieldnames):
            raise InputError(f"{path}: expected header image_id,n_faces,boxes")
        for row in reader:
            where = f"{path}:{reader.line_num}"
            try:
                dets = []
                for chunk in filter(None, (row["boxes"] or "").split(";")):
                    x, y, w, h, n = (int(v) for v in chunk.split())
                    dets.append(Detection(Rect(x, y, w, h), n))
                if int(row["n_faces"]) != len(dets):
                    raise ValueError("n_faces does not match box count")
            except (ValueError, TypeError) as exc:
                raise InputError(f"{where}: malformed detection row ({exc})") from None
            if row["image_id"] in out:
                raise InputError(f"{where}: duplicate image id {row['image_id']!r}")
            out[row["image_id"]] = dets
    return out


# --- score correction -----------------------------------------------------

def read_scores(path) -> list[tuple[str, float]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: score table not found")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["image_id", "score"]:
            raise InputError(f"{path}:1: expected header image_id,score")
        for row in reader:
            if not row:
                continue
            where = f"{path}:{reader.line_num}"
            if len(row) != 2:
                raise InputError(f"{where}: expected 2 fields, got {len(row)}")
            try:
                score = float(row[1])
            except ValueError:
                raise InputError(f"{where}: score {row[1]!r} is not a number") from None
            if not 0.0 <= score <= 1.0:
                raise InputError(f"{where}: score {score} outside [0, 1]")
            rows.append((row[0].strip(), score))
    return rows


def run_postprocess(scores_csv, report_csv, landmarks_path, out_csv,
                    policy: CorrectionPolicy = CorrectionPolicy()) -> dict:
    scores = read_scores(scores_csv)
    detections = {k: [d.box for d in v]
                  for k, v in read_detection_report(report_csv).items()} if report_csv else {}
    landmarks = load_landmark_dir(landmarks_path) if landmarks_path else {}
    records, summary = batch_correct(scores, detections, landmarks, policy)
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "raw_score", "corrected_score", "evidence"])
        for r in records:
            evidence = r.evidence + (";no_report" if r.missing_report else "")
            w.writerow([r.image_id, repr(r.raw_score), repr(r.corrected_score), evidence])
    return summary

