"""Stride chunking of a video timeline into fixed-length snippets.

Snippets start at multiples of the stride within each cut-free segment,
counted from the segment start. Windows that would cross a cut or run past
the segment end are simply not produced, so snippet duration is exactly
uniform and no snippet ever spans a cut.
"""

from __future__ import annotations

from .cuts import CutList
from .errors import ContractViolation
from .manifest import Snippet

DEFAULT_SNIPPET_LENGTH_S = 3.0


def snippet_id_for(video_ref: str, start_s: float) -> str:
    return f"{video_ref}#{int(round(start_s * 1000)):08d}"


def chunk_timeline(duration_s: float, cuts: CutList, source_id: str,
                   length_s: float = DEFAULT_SNIPPET_LENGTH_S,
                   stride_s: float = 2.0) -> list[Snippet]:
    """Chunk one video into snippets respecting its cut list."""
    if length_s <= 0:
        raise ContractViolation("snippet length must be positive")
    if not 0 < stride_s <= length_s:
        raise ContractViolation("stride must satisfy 0 < stride <= length")
    if duration_s < length_s:
        return []

    boundaries = [t for t in cuts.cut_times() if 0.0 < t < duration_s]
    segment_edges = [0.0] + boundaries + [duration_s]

    snippets: list[Snippet] = []
    for seg_start, seg_end in zip(segment_edges[:-1], segment_edges[1:]):
        k = 0
        while True:
            start = seg_start + k * stride_s
            end = start + length_s
            if end > seg_end + 1e-9:
                break
            start, end = round(start, 6), round(end, 6)
            snippets.append(Snippet(
                snippet_id=snippet_id_for(cuts.video_ref, start),
                source_id=source_id,
                video_ref=cuts.video_ref,
                start_s=start,
                end_s=end,
                keyframe_time_s=round(0.5 * (start + end), 6),
            ))
            k += 1
    return snippets
