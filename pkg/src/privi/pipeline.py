"""Snippet-level pipeline operations tying providers to manifests.

Stage functions take and return snippet lists; checkpointing and artifact
hashing live in the workspace module. Every discard sets exactly one
reason, and kept + discarded always add up to the input count. Work is
fanned out over a bounded thread pool with results merged in snippet-id
order so output is deterministic regardless of scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .boxes import nms
from .cuts import CutList
from .errors import ProviderError
from .frames import Keyframe
from .manifest import EmbeddingStore, Snippet, SourceDataset
from .providers import DetectorProvider, EmbeddingProvider
from .relevance import RelevanceModel

log = logging.getLogger(__name__)

DEFAULT_SCORE_THRESHOLD = 0.35
DEFAULT_IOU_THRESHOLD = 0.5
DETECTOR_PROMPT = "primate"


def _map_by_snippet(todo, fn, workers: int):
    """Apply fn to the given snippets concurrently, merged by snippet id."""
    if workers <= 1:
        return {s.snippet_id: fn(s) for s in todo}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        values = list(pool.map(fn, todo))
    return {s.snippet_id: v for s, v in zip(todo, values)}


def embed_keyframes(snippets: list[Snippet], embedder: EmbeddingProvider,
                    keyframe_fn, store: EmbeddingStore, store_name: str = "embeddings.pvem",
                    workers: int = 1) -> tuple[list[Snippet], list[str]]:
    """Embed every kept snippet's keyframe into the store.

    Returns updated snippets plus the ids left pending on provider failure.
    """

    def work(s: Snippet):
        try:
            return embedder.embed(keyframe_fn(s))
        except ProviderError as exc:
            log.warning("embed pending for %s: %s", s.snippet_id, exc)
            return None

    todo = [s for s in snippets if s.kept and s.snippet_id not in store]
    results = _map_by_snippet(todo, work, workers)
    pending: list[str] = []
    out: list[Snippet] = []
    for s in snippets:
        if not s.kept or s.snippet_id in store:
            if s.kept and s.snippet_id in store:
                s = replace(s, embedding_ref=f"{store_name}:{store.index[s.snippet_id]}")
            out.append(s)
            continue
        vec = results.get(s.snippet_id)
        if vec is None:
            pending.append(s.snippet_id)
            out.append(s)
            continue
        row = store.add(s.snippet_id, vec)
        out.append(replace(s, embedding_ref=f"{store_name}:{row}"))
    return out, pending


def apply_relevance(snippets: list[Snippet], store: EmbeddingStore,
                    model: RelevanceModel) -> list[Snippet]:
    """Score kept snippets and discard the ones below the model threshold."""
    out = []
    for s in snippets:
        if not s.kept:
            out.append(s)
            continue
        score = float(model.scores(store.get(s.snippet_id)[None, :])[0])
        s = replace(s, relevance_score=score)
        if score < model.threshold:
            s = s.discarded("irrelevant")
        out.append(s)
    return out


def filter_by_detection(snippets: list[Snippet], detector: DetectorProvider,
                        keyframe_fn, score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                        iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                        prompt: str = DETECTOR_PROMPT,
                        workers: int = 1) -> tuple[list[Snippet], list[str]]:
    """Detect on keyframes, keep NMS survivors, drop box-free snippets.

    Provider failures leave the snippet pending (unchanged, reported back)
    so an interrupted stage can resume.
    """

    def work(s: Snippet):
        try:
            raw = detector.detect(keyframe_fn(s), prompt)
        except ProviderError as exc:
            log.warning("detection pending for %s: %s", s.snippet_id, exc)
            return None
        return nms(raw, iou_threshold, score_threshold)

    results = _map_by_snippet([s for s in snippets if s.kept], work, workers)
    pending: list[str] = []
    out: list[Snippet] = []
    for s in snippets:
        if not s.kept:
            out.append(s)
            continue
        boxes = results.get(s.snippet_id)
        if boxes is None:
            pending.append(s.snippet_id)
            out.append(s)
        elif boxes:
            out.append(replace(s, boxes=boxes))
        else:
            out.append(replace(s, boxes=[]).discarded("no_detection"))
    return out, pending


def assign_species(snippet: Snippet, source: SourceDataset) -> str | None:
    """Species from source metadata, arbitrated by the top detection label.

    Single-species sources label directly; multi-species sources trust the
    highest-score box only when its label appears in the source's species
    list. Disagreement leaves the snippet unlabeled.
    """
    if not snippet.boxes:
        return None
    if len(source.species) == 1:
        return source.species[0]
    if not source.species:
        return None
    top = max(snippet.boxes, key=lambda b: b.score)
    return top.label if top.label in source.species else None


def label_species(snippets: list[Snippet], sources: list[SourceDataset]) -> list[Snippet]:
    by_id = {src.id: src for src in sources}
    out = []
    for s in snippets:
        if s.kept and s.boxes and s.source_id in by_id:
            out.append(replace(s, species=assign_species(s, by_id[s.source_id])))
        else:
            out.append(s)
    return out


def mark_cut_overlaps(snippets: list[Snippet], cutlists: dict[str, CutList]) -> list[Snippet]:
    """Discard kept snippets whose span strictly contains a cut.

    chunk_timeline never produces such windows itself; this re-validation
    covers manifests chunked before a cut list existed.
    """
    out = []
    for s in snippets:
        if s.kept and s.video_ref in cutlists:
            times = cutlists[s.video_ref].cut_times()
            if any(s.start_s < t < s.end_s for t in times):
                out.append(s.discarded("cut_overlap"))
                continue
        out.append(s)
    return out


def keyframe_loader(frame_source_fn):
    """Build a snippet -> Keyframe function from a video_ref -> FrameSource map."""

    def load(s: Snippet) -> Keyframe:
        src = frame_source_fn(s.video_ref)
        index = int(round(s.keyframe_time_s * src.fps))
        index = min(max(index, 0), len(src) - 1)
        image = src.frame_at(index)
        meta = getattr(src, "meta_at", lambda i: {})(index)
        return Keyframe(image=image, video_ref=s.video_ref, time_s=s.keyframe_time_s, meta=meta)

    return load
