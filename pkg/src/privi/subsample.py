"""Water-filling subsampling to hit per-source target proportions.

Each source's continuous share at fill level B is min(available, target*B);
we solve for the largest level whose total stays within budget, then round
to integers with a largest-remainder pass so the final total equals
min(budget, total available) exactly. Capped sources implicitly redistribute
their deficit to uncapped ones through the fill level. Per-source selection
of which snippets survive is uniform at random under a fixed seed.
"""

from __future__ import annotations

import logging

from .errors import ContractViolation
from .manifest import Snippet
from .rng import make_rng, stream_id

log = logging.getLogger(__name__)


def _fill_level(avail: dict[str, int], targets: dict[str, float], goal: int) -> float:
    """Largest B with sum_s min(avail_s, target_s * B) <= goal (continuous)."""
    # breakpoints where some source saturates: avail_s / target_s
    active = {s: t for s, t in targets.items() if t > 0 and avail.get(s, 0) > 0}
    if not active:
        return 0.0
    breaks = sorted(avail[s] / t for s, t in active.items())
    slope = sum(active.values())
    prev_b = 0.0
    allocated = 0.0
    for b in breaks + [float("inf")]:
        # linear segment [prev_b, b] with the current slope
        if slope > 0:
            b_hit = prev_b + (goal - allocated) / slope
            if b_hit <= b:
                return b_hit
        if b == float("inf"):
            break
        allocated += slope * (b - prev_b)
        for s, t in list(active.items()):  # saturate sources breaking at b
            if abs(avail[s] / t - b) < 1e-12:
                slope -= t
                del active[s]
        prev_b = b
    # every targeted source saturated before the goal was reached
    return breaks[-1]


def subsample_counts(kept_counts: dict[str, int], targets: dict[str, float],
                     total_budget: int) -> tuple[dict[str, int], bool]:
    """Integer allocation per source; returns (allocation, deviation_warning).

    Sources absent from targets (or with target 0) only receive snippets from
    the leftover pass once every targeted source is capped.
    """
    if total_budget < 0:
        raise ContractViolation("budget must be non-negative")
    if sum(targets.values()) > 1.0 + 1e-9:
        raise ContractViolation("target proportions must sum to <= 1")
    avail = {s: int(c) for s, c in kept_counts.items()}
    total_avail = sum(avail.values())
    deviated = False
    if total_budget >= total_avail:
        if total_budget > total_avail:
            log.warning("budget %d exceeds available %d; composition will deviate from targets",
                        total_budget, total_avail)
            deviated = True
        return dict(avail), deviated

    goal = total_budget
    level = _fill_level(avail, targets, goal)
    cont = {s: min(float(avail[s]), targets.get(s, 0.0) * level) for s in avail}
    # leftover can only exist when all targeted sources are capped; spread it
    # over sources that still have room, proportional to remaining room
    short = goal - sum(cont.values())
    if short > 1e-9:
        room = {s: avail[s] - cont[s] for s in avail if avail[s] - cont[s] > 1e-12}
        total_room = sum(room.values())
        if total_room > 0:
            for s, r in room.items():
                cont[s] += short * r / total_room
        deviated = True

    # largest-remainder rounding to hit the goal exactly
    floors = {s: int(cont[s]) for s in avail}
    remainder = goal - sum(floors.values())
    order = sorted(avail, key=lambda s: (-(cont[s] - floors[s]), s))
    alloc = dict(floors)
    for s in order:
        if remainder <= 0:
            break
        if alloc[s] < avail[s]:
            alloc[s] += 1
            remainder -= 1
    if remainder > 0:  # some floors were at capacity; push into any room left
        for s in sorted(avail):
            while remainder > 0 and alloc[s] < avail[s]:
                alloc[s] += 1
                remainder -= 1
    return alloc, deviated


def subsample(snippets: list[Snippet], targets: dict[str, float],
              total_budget: int, seed: int) -> list[Snippet]:
    """Mark snippets beyond each source's allocation as subsampled_out."""
    kept = [s for s in snippets if s.kept]
    counts: dict[str, int] = {}
    for s in kept:
        counts[s.source_id] = counts.get(s.source_id, 0) + 1
    alloc, _ = subsample_counts(counts, targets, total_budget)

    survivors: set[str] = set()
    by_source: dict[str, list[Snippet]] = {}
    for s in kept:
        by_source.setdefault(s.source_id, []).append(s)
    for source_id, group in sorted(by_source.items()):
        group.sort(key=lambda s: s.snippet_id)
        take = alloc.get(source_id, 0)
        rng = make_rng(seed, stream_id("subsample", source_id))
        chosen = rng.choice(len(group), size=take, replace=False) if take else []
        survivors.update(group[i].snippet_id for i in chosen)

    out = []
    for s in snippets:
        if s.kept and s.snippet_id not in survivors:
            out.append(s.discarded("subsampled_out"))
        else:
            out.append(s)
    return out
