"""Snippet records, manifests, composition reports, and the embedding store.

The manifest is the pipeline's unit of exchange: line-delimited UTF-8, one
JSON object per snippet with a fixed field order (snippet_id, source_id,
video_ref, start_s, end_s, keyframe_time_s, boxes, embedding_ref,
relevance_score, species, kept, discard_reason) and floats serialized with
at most 6 decimals. Stage reruns with identical inputs must produce
byte-identical files, so serialization has no timestamps and no dict-order
ambiguity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .boxes import DetectionBox
from .errors import ContractViolation

DISCARD_REASONS = ("cut_overlap", "irrelevant", "no_detection", "subsampled_out")

MANIFEST_FIELDS = (
    "snippet_id", "source_id", "video_ref", "start_s", "end_s",
    "keyframe_time_s", "boxes", "embedding_ref", "relevance_score",
    "species", "kept", "discard_reason",
)


@dataclass(frozen=True)
class SourceDataset:
    """Metadata describing one homogeneous collection of source videos."""

    id: str
    setting: str  # wild | semi_free | captive
    species: tuple[str, ...] = ()
    diversity: str = "low"  # low | high
    target_proportion: float = 0.0
    chunk_stride_s: float = 2.0

    def __post_init__(self):
        if self.setting not in ("wild", "semi_free", "captive"):
            raise ContractViolation(f"unknown setting {self.setting!r}")
        if self.diversity not in ("low", "high"):
            raise ContractViolation(f"unknown diversity {self.diversity!r}")
        if not 0.0 <= self.target_proportion <= 1.0:
            raise ContractViolation("target_proportion must be in [0, 1]")
        if not 1.0 <= self.chunk_stride_s <= 3.0:
            raise ContractViolation("chunk_stride_s must be within [1, 3] seconds")


@dataclass
class Snippet:
    """A fixed-duration chunk of one source video."""

    snippet_id: str
    source_id: str
    video_ref: str
    start_s: float
    end_s: float
    keyframe_time_s: float
    boxes: list[DetectionBox] = field(default_factory=list)
    embedding_ref: str | None = None
    relevance_score: float | None = None
    species: str | None = None
    kept: bool = True
    discard_reason: str | None = None

    def __post_init__(self):
        if not 0 <= self.start_s < self.end_s:
            raise ContractViolation(f"invalid snippet span [{self.start_s}, {self.end_s}]")
        if abs(self.keyframe_time_s - 0.5 * (self.start_s + self.end_s)) > 1e-6:
            raise ContractViolation("keyframe must sit at the snippet center")
        if not self.kept and self.discard_reason not in DISCARD_REASONS:
            raise ContractViolation(f"discarded snippet needs a reason from {DISCARD_REASONS}")
        if self.kept and self.discard_reason is not None:
            raise ContractViolation("kept snippet must not carry a discard reason")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def discarded(self, reason: str) -> "Snippet":
        return replace(self, kept=False, discard_reason=reason)


def _round6(x: float) -> float:
    return round(float(x), 6)


def snippet_to_json(s: Snippet) -> str:
    record = {
        "snippet_id": s.snippet_id,
        "source_id": s.source_id,
        "video_ref": s.video_ref,
        "start_s": _round6(s.start_s),
        "end_s": _round6(s.end_s),
        "keyframe_time_s": _round6(s.keyframe_time_s),
        "boxes": [
            {"x1": _round6(b.x1), "y1": _round6(b.y1), "x2": _round6(b.x2),
             "y2": _round6(b.y2), "score": _round6(b.score), "label": b.label}
            for b in s.boxes
        ],
        "embedding_ref": s.embedding_ref,
        "relevance_score": None if s.relevance_score is None else _round6(s.relevance_score),
        "species": s.species,
        "kept": s.kept,
        "discard_reason": s.discard_reason,
    }
    return json.dumps(record, separators=(",", ":"))


def snippet_from_json(line: str) -> Snippet:
    d = json.loads(line)
    return Snippet(
        snippet_id=d["snippet_id"],
        source_id=d["source_id"],
        video_ref=d["video_ref"],
        start_s=d["start_s"],
        end_s=d["end_s"],
        keyframe_time_s=d["keyframe_time_s"],
        boxes=[DetectionBox.from_dict(b) for b in d["boxes"]],
        embedding_ref=d["embedding_ref"],
        relevance_score=d["relevance_score"],
        species=d["species"],
        kept=d["kept"],
        discard_reason=d["discard_reason"],
    )


def write_manifest(snippets: list[Snippet], path: str | Path) -> None:
    seen: set[str] = set()
    for s in snippets:
        if s.snippet_id in seen:
            raise ContractViolation(f"duplicate snippet_id {s.snippet_id!r}")
        seen.add(s.snippet_id)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in snippets:
            fh.write(snippet_to_json(s))
            fh.write("\n")


def read_manifest(path: str | Path) -> list[Snippet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(snippet_from_json(line))
    return out


# ---------------------------------------------------------------------------
# composition report


def _union_hours(snippets: list[Snippet]) -> float:
    """Unique hours: union of [start, end] intervals per video, summed."""
    by_video: dict[str, list[tuple[float, float]]] = {}
    for s in snippets:
        by_video.setdefault(s.video_ref, []).append((s.start_s, s.end_s))
    total = 0.0
    for spans in by_video.values():
        spans.sort()
        cur_start, cur_end = spans[0]
        for a, b in spans[1:]:
            if a > cur_end:
                total += cur_end - cur_start
                cur_start, cur_end = a, b
            else:
                cur_end = max(cur_end, b)
        total += cur_end - cur_start
    return total / 3600.0


def composition_report(snippets: list[Snippet], sources: list[SourceDataset]) -> dict:
    """Dataset composition summary: unique hours, species %, setting %, counts."""
    kept = [s for s in snippets if s.kept]
    settings = {src.id: src.setting for src in sources}
    n = len(kept)

    species_counts: dict[str, int] = {}
    setting_counts: dict[str, int] = {}
    source_counts: dict[str, int] = {}
    for s in kept:
        species_counts[s.species or "unlabeled"] = species_counts.get(s.species or "unlabeled", 0) + 1
        setting = settings.get(s.source_id, "unknown")
        setting_counts[setting] = setting_counts.get(setting, 0) + 1
        source_counts[s.source_id] = source_counts.get(s.source_id, 0) + 1

    pct = lambda c: {k: 100.0 * v / n for k, v in sorted(c.items())} if n else {}
    return {
        "n_snippets": n,
        "n_input": len(snippets),
        "unique_hours": _union_hours(kept),
        "species_pct": pct(species_counts),
        "setting_pct": pct(setting_counts),
        "source_counts": dict(sorted(source_counts.items())),
        "discard_reasons": _discard_histogram(snippets),
    }


def _discard_histogram(snippets: list[Snippet]) -> dict[str, int]:
    hist: dict[str, int] = {}
    for s in snippets:
        if not s.kept:
            hist[s.discard_reason] = hist.get(s.discard_reason, 0) + 1
    return hist


def render_composition(report: dict) -> str:
    lines = [
        f"unique hours: {report['unique_hours']:.2f}",
        f"snippets kept: {report['n_snippets']} of {report['n_input']}",
        "species [%]:",
    ]
    for k, v in report["species_pct"].items():
        lines.append(f"  {k:<20s} {v:5.1f}")
    lines.append("setting [%]:")
    for k, v in report["setting_pct"].items():
        lines.append(f"  {k:<20s} {v:5.1f}")
    lines.append("per-source counts:")
    for k, v in report["source_counts"].items():
        lines.append(f"  {k:<20s} {v}")
    if report["discard_reasons"]:
        lines.append("discards:")
        for k, v in sorted(report["discard_reasons"].items()):
            lines.append(f"  {k:<20s} {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# embedding store: binary f32 rows plus a snippet-id -> row sidecar index

_MAGIC = b"PVEM"
_VERSION = 1


class EmbeddingStore:
    """Little-endian binary store of fixed-dim float32 embedding rows."""

    def __init__(self, dim: int, rows: np.ndarray | None = None, index: dict[str, int] | None = None):
        self.dim = int(dim)
        self.rows = np.zeros((0, dim), dtype=np.float32) if rows is None else rows
        self.index: dict[str, int] = {} if index is None else index

    def add(self, snippet_id: str, vector: np.ndarray) -> int:
        vec = np.asarray(vector, dtype=np.float32).reshape(-1)
        if vec.shape != (self.dim,):
            raise ContractViolation(f"embedding dim {vec.shape} != store dim ({self.dim},)")
        if snippet_id in self.index:
            raise ContractViolation(f"snippet {snippet_id!r} already stored")
        row = self.rows.shape[0]
        self.rows = np.concatenate([self.rows, vec[None, :]], axis=0)
        self.index[snippet_id] = row
        return row

    def get(self, snippet_id: str) -> np.ndarray:
        return self.rows[self.index[snippet_id]]

    def __contains__(self, snippet_id: str) -> bool:
        return snippet_id in self.index

    def __len__(self) -> int:
        return self.rows.shape[0]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIQ", _VERSION, self.dim, self.rows.shape[0]))
            fh.write(self.rows.astype("<f4").tobytes())
        sidecar = {sid: row for sid, row in sorted(self.index.items())}
        with open(self._sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, separators=(",", ":"), sort_keys=True)

    @staticmethod
    def _sidecar_path(path: Path) -> Path:
        return path.with_suffix(path.suffix + ".idx.json")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingStore":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise ContractViolation(f"bad embedding store magic {magic!r}")
            version, dim, count = struct.unpack("<IIQ", fh.read(16))
            if version != _VERSION:
                raise ContractViolation(f"unsupported embedding store version {version}")
            data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4").reshape(count, dim).copy()
        with open(cls._sidecar_path(path), encoding="utf-8") as fh:
            index = {k: int(v) for k, v in json.load(fh).items()}
        return cls(dim=dim, rows=data, index=index)
