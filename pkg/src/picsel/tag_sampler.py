"""Quota sampling over machine tags.

The sampler balances tag coverage in two passes. Rare tags (fewer corpus
occurrences than the quota) pull in all of their images; every other tag
is then topped up to the quota with its highest-confidence images that
are not already selected. A bisection wrapper finds the largest quota
whose selection still fits a target budget.
"""

from __future__ import annotations

from dataclasses import dataclass

from .records import ImageRecord, Selection


@dataclass
class TagIndex:
    """Per-tag corpus statistics and candidate orderings.

    phi counts occurrences per tag over the whole corpus; postings lists
    each tag's image ids sorted by decreasing confidence (ties by
    ascending id); tags_of maps an image to its tags.
    """

    phi: dict[str, int]
    postings: dict[str, tuple[str, ...]]
    tags_of: dict[str, tuple[str, ...]]

    @property
    def tagged_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.tags_of))


def build_tag_index(records) -> TagIndex:
    by_tag: dict[str, list[tuple[float, str]]] = {}
    tags_of: dict[str, tuple[str, ...]] = {}
    for r in records:
        if not isinstance(r, ImageRecord):
            raise TypeError(f"expected ImageRecord, got {type(r)!r}")
        if r.image_id in tags_of:
            raise ValueError(f"duplicate image id {r.image_id!r}")
        if not r.tags:
            continue
        tags_of[r.image_id] = tuple(t.tag for t in r.tags)
        for t in r.tags:
            by_tag.setdefault(t.tag, []).append((t.confidence, r.image_id))

    postings = {}
    for tag, entries in by_tag.items():
        entries.sort(key=lambda e: (-e[0], e[1]))
        postings[tag] = tuple(image_id for _, image_id in entries)
    phi = {tag: len(ids) for tag, ids in postings.items()}
    return TagIndex(phi=phi, postings=postings, tags_of=tags_of)


def sample_by_quota(index: TagIndex, quota: int, size_cap: int | None = None) -> Selection:
    """Select images so that every tag reaches min(quota, corpus count).

    Pass 1 admits, in ascending id order, every image carrying at least
    one tag whose corpus count is below the quota (those tags can never
    reach it, so all their images count). Pass 2 walks the remaining tags
    by increasing corpus count (ties by tag name) and adds unselected
    images from the top of each tag's confidence ranking until the tag's
    fulfillment — phase-1 members included — reaches the quota. Selection
    stops dead when size_cap is hit.
    """
    if quota < 1:
        raise ValueError(f"quota must be >= 1, got {quota}")
    if size_cap is not None and size_cap < 1:
        raise ValueError(f"size_cap must be >= 1, got {size_cap}")

    selected: dict[str, None] = {}
    fulfillment = {tag: 0 for tag in index.phi}

    def add(image_id: str) -> bool:
        selected[image_id] = None
        for tag in index.tags_of[image_id]:
            fulfillment[tag] += 1
        return size_cap is not None and len(selected) >= size_cap

    def result() -> Selection:
        return Selection(
            ids=tuple(selected),
            quota_used=quota,
            tag_fulfillment=dict(fulfillment),
        )

    rare = {tag for tag, count in index.phi.items() if count < quota}
    for image_id in index.tagged_ids:
        if any(tag in rare for tag in index.tags_of[image_id]):
            if add(image_id):
                return result()

    for tag in sorted(
        (t for t, count in index.phi.items() if count >= quota),
        key=lambda t: (index.phi[t], t),
    ):
        for image_id in index.postings[tag]:
            if fulfillment[tag] >= quota:
                break
            if image_id in selected:
                continue
            if add(image_id):
                return result()
    return result()


def choose_quota(
    index: TagIndex,
    target_size: int,
    tolerance: float = 0.0,
    size_cap: int | None = None,
) -> tuple[int, Selection]:
    """Largest integer quota whose uncapped selection stays within
    target_size * (1 + tolerance), found by bisection.

    Selection size is assumed monotone in the quota; every probe is checked
    against all earlier probes and a violation raises. The returned
    Selection is re-run with size_cap applied.
    """
    if not index.phi:
        raise ValueError("tag index is empty")
    corpus_size = len(index.tags_of)
    if not 1 <= target_size <= corpus_size:
        raise ValueError(
            f"target_size must be in [1, {corpus_size}], got {target_size}"
        )
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")

    budget = target_size * (1.0 + tolerance)
    probes: dict[int, int] = {}

    def probe(q: int) -> int:
        if q not in probes:
            probes[q] = len(sample_by_quota(index, q))
            for q2, s2 in probes.items():
                s1 = probes[q]
                if (q < q2 and s1 > s2) or (q > q2 and s1 < s2):
                    raise RuntimeError(
                        "selection size is not monotone in the quota: "
                        f"size({q})={s1}, size({q2})={s2}"
                    )
        return probes[q]

    floor_size = probe(1)
    if floor_size > budget:
        raise ValueError(
            f"target {target_size} (tolerance {tolerance}) is below the "
            f"smallest achievable selection of {floor_size} images at quota 1"
        )
    hi = max(index.phi.values())
    if probe(hi) <= budget:
        best = hi
    else:
        lo = 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if probe(mid) <= budget:
                lo = mid
            else:
                hi = mid
        best = lo
    return best, sample_by_quota(index, best, size_cap=size_cap)
