"""Detection boxes, IoU, and greedy non-maximum suppression."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractViolation


@dataclass(frozen=True)
class DetectionBox:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float
    label: str = ""

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ContractViolation(f"degenerate box {(self.x1, self.y1, self.x2, self.y2)}")
        if not 0.0 <= self.score <= 1.0:
            raise ContractViolation(f"box score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_dict(self) -> dict:
        return {"x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2,
                "score": self.score, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionBox":
        return cls(x1=d["x1"], y1=d["y1"], x2=d["x2"], y2=d["y2"],
                   score=d["score"], label=d.get("label", ""))


def iou(a: DetectionBox, b: DetectionBox) -> float:
    """Intersection over union of two boxes."""
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = max(0.0, ix2 - ix1)
    ih = max(0.0, iy2 - iy1)
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def nms(boxes: list[DetectionBox], iou_threshold: float, score_threshold: float = 0.0) -> list[DetectionBox]:
    """Greedy NMS: drop low-score boxes, then repeatedly keep the highest
    scorer and remove everything overlapping it above the IoU threshold.

    Score ties are broken by input order (earlier index wins). Survivors
    keep their input order relative to each other.
    """
    candidates = [(i, b) for i, b in enumerate(boxes) if b.score >= score_threshold]
    candidates.sort(key=lambda ib: (-ib[1].score, ib[0]))
    kept: list[tuple[int, DetectionBox]] = []
    for i, box in candidates:
        if all(iou(box, kb) <= iou_threshold for _, kb in kept):
            kept.append((i, box))
    kept.sort(key=lambda ib: ib[0])
    return [b for _, b in kept]
