"""Detector-driven correction of borderline classifier scores.

Scores near 0.5 are nudged by face-detector evidence: when neither the Haar
cascade nor the landmark sidecar finds a face the image is pushed toward
"fake"; when a Haar box contains the landmark centroid it is pushed toward
"real". The push fades linearly to zero at ``0.5 +/- tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError, ParameterError
from .landmarks import LandmarkSet

NO_FACE = "no_face"
CONSISTENT_FACE = "consistent_face"
MIXED = "mixed"


@dataclass(frozen=True)
class CorrectionPolicy:
    tau: float = 0.15
    delta: float = 0.10

    def __post_init__(self):
        if not 0 < self.tau < 0.5:
            raise ParameterError(f"tau must lie in (0, 0.5), got {self.tau}")
        if abs(self.delta) > self.tau:
            raise ParameterError("|delta| must not exceed tau (monotonicity)")

    def push(self, evidence: str) -> float:
        if evidence == NO_FACE:
            return self.delta
        if evidence == CONSISTENT_FACE:
            return -self.delta
        return 0.0


@dataclass
class ScoreRecord:
    image_id: str
    raw_score: float
    haar_faces: int = 0
    landmarks_present: bool = False
    landmarks_inside_haar: bool = False
    corrected_score: float | None = None
    missing_report: bool = False

    def __post_init__(self):
        if not 0.0 <= self.raw_score <= 1.0:
            raise InputError(f"{self.image_id}: score {self.raw_score} outside [0, 1]")
        if self.landmarks_inside_haar and not (self.landmarks_present and self.haar_faces >= 1):
            raise ParameterError(f"{self.image_id}: inconsistent evidence flags")

    @property
    def evidence(self) -> str:
        if self.landmarks_inside_haar:
            return CONSISTENT_FACE
        if self.haar_faces == 0 and not self.landmarks_present:
            return NO_FACE
        return MIXED


def band_weight(s: float, tau: float) -> float:
    return max(0.0, 1.0 - abs(s - 0.5) / tau)


def correct_value(s: float, push: float, tau: float) -> float:
    """``clamp(s + push * band_weight(s))``.

    Each half of the band is evaluated as ``0.5 + (a * d + push)`` with
    ``d = s - 0.5`` and a slope ``a >= 0``; rounding is monotone, so the
    result never inverts the order of two scores.
    """
    d = s - 0.5
    if push == 0 or abs(d) >= tau:
        return s
    a = 1.0 - push / tau if d >= 0 else 1.0 + push / tau
    return min(1.0, max(0.0, 0.5 + (a * d + push)))


def correct_score(rec: ScoreRecord, policy: CorrectionPolicy = CorrectionPolicy()) -> float:
    return correct_value(rec.raw_score, policy.push(rec.evidence), policy.tau)


def box_contains(box, point) -> bool:
    x, y = point
    return box.x <= x < box.x + box.w and box.y <= y < box.y + box.h


def build_record(image_id: str, score: float, boxes, lms: LandmarkSet | None) -> ScoreRecord:
    """Evidence for one image; ``boxes=None`` means no detection row."""
    present = lms is not None
    inside = present and any(box_contains(b, lms.centroid()) for b in boxes or ())
    return ScoreRecord(image_id, score, haar_faces=len(boxes or ()),
                       landmarks_present=present, landmarks_inside_haar=inside,
                       missing_report=boxes is None)


def batch_correct(scores, detections: dict, landmarks: dict,
                  policy: CorrectionPolicy = CorrectionPolicy()):
    """Correct every ``(image_id, score)`` row.

    Args:
        scores: iterable of ``(image_id, score)`` in output order.
        detections: image id -> list of boxes (``Rect``-like).
        landmarks: image id -> ``LandmarkSet``.

    Returns:
        ``(records, summary)``; summary counts raised, lowered, untouched
        and rows whose id had no detection row (``absent``).
    """
    records = []
    seen = set()
    summary = {"raised": 0, "lowered": 0, "untouched": 0, "absent": 0}
    for image_id, score in scores:
        if image_id in seen:
            raise InputError(f"duplicate image id {image_id!r} in score table")
        seen.add(image_id)
        rec = build_record(image_id, float(score), detections.get(image_id),
                           landmarks.get(image_id))
        rec.corrected_score = correct_score(rec, policy)
        if rec.corrected_score > rec.raw_score:
            summary["raised"] += 1
        elif rec.corrected_score < rec.raw_score:
            summary["lowered"] += 1
        else:
            summary["untouched"] += 1
        summary["absent"] += rec.missing_report
        records.append(rec)
    return records, summary
