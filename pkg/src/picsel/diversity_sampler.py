"""Histogram-uniform subset selection and near-duplicate removal.

A dataset is binned per indicator (equal-width bins over the observed
range, plus the content cluster as a categorical dimension). Selecting M
images to make every per-dimension histogram as flat as possible is cast
as minimizing the summed L1 deviation from the uniform target M/n_bins.
uniform_sample is the scalable heuristic (greedy construction plus a
seeded swap search); exact_sample is a small branch-and-bound reference
solver for audits. dedup then strips near-duplicates by repeatedly
deleting one member of the closest pair in normalized indicator space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .records import SCALAR_INDICATORS, IndicatorVector, Selection

DEFAULT_BINS = 200
CONTENT_DIM = "content"
EXACT_SIZE_CAP = 24
_EXHAUSTIVE_SWAP_PAIRS = 250_000


@dataclass
class BinnedDataset:
    """Bin assignments for every image across all sampling dimensions.

    Rows of bin_index follow ids; n_bins gives the bin count per dimension
    (scalar dims share the configured count unless the dim is constant,
    which collapses to a single flagged bin). Bins are right-closed: an
    interior edge value falls in the lower bin, and the first bin keeps
    its left edge, so {0, 0.5, 1.0} at two bins lands in bins [0, 0, 1].
    """

    ids: tuple[str, ...]
    dim_names: tuple[str, ...]
    bin_index: np.ndarray  # (n, n_dims) int64
    n_bins: tuple[int, ...]
    edges: dict[str, np.ndarray] = field(default_factory=dict)
    constant_dims: tuple[str, ...] = ()
    content_values: tuple[int, ...] = ()  # cluster id per content bin

    def __len__(self) -> int:
        return len(self.ids)


def _scalar_bins(values: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray, bool]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.zeros(values.size, dtype=np.int64), np.array([lo, hi]), True
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.searchsorted(edges, values, side="left") - 1
    return np.clip(idx, 0, n_bins - 1).astype(np.int64), edges, False


def bin_dataset(
    vectors,
    n_bins: int = DEFAULT_BINS,
    scalar_dims=SCALAR_INDICATORS,
    include_content: bool = True,
) -> BinnedDataset:
    """Equal-width binning per scalar indicator plus the categorical
    content dimension (observed cluster ids, one bin each)."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no vectors to bin")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    ids = tuple(v.image_id for v in vectors)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids")

    columns: list[np.ndarray] = []
    names: list[str] = []
    counts: list[int] = []
    edges: dict[str, np.ndarray] = {}
    constant: list[str] = []

    for name in scalar_dims:
        raw = [v.scalar(name) for v in vectors]
        missing = [v.image_id for v, r in zip(vectors, raw) if r is None]
        if missing:
            raise ValueError(
                f"dimension {name!r} missing for {len(missing)} images "
                f"(first: {missing[0]!r}); drop the dim or fill the values"
            )
        idx, dim_edges, is_const = _scalar_bins(np.array(raw, dtype=np.float64), n_bins)
        columns.append(idx)
        names.append(name)
        counts.append(1 if is_const else n_bins)
        edges[name] = dim_edges
        if is_const:
            constant.append(name)

    content_values: tuple[int, ...] = ()
    if include_content:
        clusters = [v.cluster_id for v in vectors]
        missing = [v.image_id for v, c in zip(vectors, clusters) if c is None]
        if missing:
            raise ValueError(
                f"cluster id missing for {len(missing)} images (first: {missing[0]!r})"
            )
        distinct = sorted(set(clusters))
        lookup = {c: i for i, c in enumerate(distinct)}
        columns.append(np.array([lookup[c] for c in clusters], dtype=np.int64))
        names.append(CONTENT_DIM)
        counts.append(len(distinct))
        content_values = tuple(distinct)
        if len(distinct) == 1:
            constant.append(CONTENT_DIM)

    return BinnedDataset(
        ids=ids,
        dim_names=tuple(names),
        bin_index=np.stack(columns, axis=1),
        n_bins=tuple(counts),
        edges=edges,
        constant_dims=tuple(constant),
        content_values=content_values,
    )


# --- objective machinery -----------------------------------------------------


class _Histogrammer:
    """Flattened bin bookkeeping: global bin offsets, occupancy, targets."""

    def __init__(self, binned: BinnedDataset, m: int):
        offsets = np.concatenate(([0], np.cumsum(binned.n_bins)))
        self.total_bins = int(offsets[-1])
        self.flat = binned.bin_index + offsets[:-1][None, :]  # (n, D)
        self.targets = np.concatenate(
            [np.full(nb, m / nb, dtype=np.float64) for nb in binned.n_bins]
        )
        self.occupancy = np.zeros(self.total_bins, dtype=np.int64)

    def objective(self) -> float:
        return float(np.abs(self.occupancy - self.targets).sum())

    def add(self, row: int) -> None:
        np.add.at(self.occupancy, self.flat[row], 1)

    def remove(self, row: int) -> None:
        np.add.at(self.occupancy, self.flat[row], -1)

    def add_delta(self, row: int) -> float:
        b = self.flat[row]
        o = self.occupancy[b].astype(np.float64)
        t = self.targets[b]
        return float((np.abs(o + 1 - t) - np.abs(o - t)).sum())

    def swap_delta(self, row_out: int, row_in: int) -> float:
        b_out, b_in = self.flat[row_out], self.flat[row_in]
        delta = 0.0
        for d in range(b_out.size):
            bo, bi = int(b_out[d]), int(b_in[d])
            if bo == bi:
                continue
            oo, oi = float(self.occupancy[bo]), float(self.occupancy[bi])
            to, ti = self.targets[bo], self.targets[bi]
            delta += abs(oo - 1 - to) - abs(oo - to)
            delta += abs(oi + 1 - ti) - abs(oi - ti)
        return delta


def evaluate_objective(binned: BinnedDataset, ids, m: int | None = None) -> float:
    """Summed L1 histogram deviation of a concrete selection (audit helper)."""
    ids = list(ids)
    m = len(ids) if m is None else m
    hist = _Histogrammer(binned, m)
    index = {image_id: i for i, image_id in enumerate(binned.ids)}
    for image_id in ids:
        hist.add(index[image_id])
    return hist.objective()


# --- heuristic solver ---------------------------------------------------------


def _greedy_rows(hist: _Histogrammer, n: int, m: int) -> tuple[list[int], list[float]]:
    # Per-global-bin step cost of one more member; refreshed only for bins
    # the last addition touched. Ties resolve to the lowest row index,
    # which is the smallest id thanks to the caller's sort.
    delta = np.abs(hist.occupancy + 1 - hist.targets) - np.abs(
        hist.occupancy - hist.targets
    )
    selected = np.zeros(n, dtype=bool)
    chosen_rows: list[int] = []
    objectives = [hist.objective()]
    for _ in range(m):
        marg = delta[hist.flat].sum(axis=1)
        marg[selected] = np.inf
        row = int(np.argmin(marg))
        selected[row] = True
        chosen_rows.append(row)
        hist.add(row)
        touched = hist.flat[row]
        delta[touched] = np.abs(hist.occupancy[touched] + 1 - hist.targets[touched]) - np.abs(
            hist.occupancy[touched] - hist.targets[touched]
        )
        objectives.append(hist.objective())
    return chosen_rows, objectives


def _exhaustive_swaps(
    hist: _Histogrammer, n: int, chosen_rows: list[int]
) -> list[float]:
    """Best-improvement 1-swap passes until no trade helps (mutates state)."""
    selected = np.zeros(n, dtype=bool)
    selected[chosen_rows] = True
    objectives = [hist.objective()]
    improved = True
    while improved:
        improved = False
        for pos, row_out in enumerate(chosen_rows):
            best_gain, best_in = 0.0, -1
            for row_in in range(n):
                if selected[row_in]:
                    continue
                gain = hist.swap_delta(row_out, row_in)
                if gain < best_gain:
                    best_gain, best_in = gain, row_in
            if best_in >= 0:
                hist.remove(row_out)
                hist.add(best_in)
                selected[row_out] = False
                selected[best_in] = True
                chosen_rows[pos] = best_in
                objectives.append(hist.objective())
                improved = True
    return objectives


def _restart_count(pairs: int) -> int:
    # Tiny instances have rugged landscapes relative to their optimum and
    # cost nothing to restart; large ones are smooth and expensive.
    if pairs <= 2_000:
        return 24
    if pairs <= 20_000:
        return 4
    return 1


def uniform_sample(
    binned: BinnedDataset,
    m: int,
    seed: int = 0,
    swap_budget: int = 20_000,
) -> Selection:
    """Greedy construction plus seeded swap local search.

    Greedy repeatedly adds the image with the largest marginal decrease of
    the objective (ties by ascending id). The swap phase then trades one
    selected image for one unselected image while improvements exist: an
    exhaustive pass when the pair count is small enough, otherwise
    seeded random proposals up to swap_budget. Small instances escape
    1-swap local optima through extra seeded random restarts, keeping the
    best local optimum found. Identical seeds give identical selections.
    """
    n = len(binned)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")

    order = np.argsort(np.array(binned.ids))  # candidate order: ascending id
    sorted_ids = [binned.ids[i] for i in order]
    work = BinnedDataset(
        ids=tuple(sorted_ids),
        dim_names=binned.dim_names,
        bin_index=binned.bin_index[order],
        n_bins=binned.n_bins,
    )
    n_out = n - m
    exhaustive = n_out > 0 and m * n_out <= _EXHAUSTIVE_SWAP_PAIRS

    hist = _Histogrammer(work, m)
    chosen_rows, greedy_objectives = _greedy_rows(hist, n, m)
    swap_objectives = [hist.objective()]

    if exhaustive:
        swap_objectives = _exhaustive_swaps(hist, n, chosen_rows)
        best_obj = hist.objective()
        # Restarts from seeded random subsets; first strictly better wins.
        for r in range(1, _restart_count(m * n_out)):
            rng = np.random.default_rng([seed, r])
            rows = sorted(int(x) for x in rng.choice(n, size=m, replace=False))
            h2 = _Histogrammer(work, m)
            for row in rows:
                h2.add(row)
            trail = _exhaustive_swaps(h2, n, rows)
            if h2.objective() < best_obj - 1e-12:
                best_obj = h2.objective()
                chosen_rows, swap_objectives = rows, trail
    elif n_out > 0:
        rng = np.random.default_rng(seed)
        sel_rows = np.array(chosen_rows)
        selected = np.zeros(n, dtype=bool)
        selected[sel_rows] = True
        out_rows = np.nonzero(~selected)[0]
        # Proposals are biased toward trades that relieve bin pressure:
        # swap-outs drawn from the quarter of the selection whose removal
        # deltas are best, swap-ins from the quarter of the pool whose
        # addition deltas are best. Pools go stale as occupancy shifts, so
        # they are rebuilt periodically and a uniform share of proposals
        # keeps pairs outside the pools reachable.
        refresh = 512
        pool_out = pool_in = None
        for k in range(swap_budget):
            if pool_out is None or k % refresh == 0:
                rem = np.abs(hist.occupancy - 1 - hist.targets) - np.abs(
                    hist.occupancy - hist.targets
                )
                add = np.abs(hist.occupancy + 1 - hist.targets) - np.abs(
                    hist.occupancy - hist.targets
                )
                out_score = rem[hist.flat[sel_rows]].sum(axis=1)
                in_score = add[hist.flat[out_rows]].sum(axis=1)
                q_out = max(1, m // 4)
                q_in = max(1, n_out // 4)
                pool_out = np.argpartition(out_score, q_out - 1)[:q_out]
                pool_in = np.argpartition(in_score, q_in - 1)[:q_in]
            if rng.random() < 0.25:
                i = int(rng.integers(m))
                j = int(rng.integers(n_out))
            else:
                i = int(pool_out[rng.integers(pool_out.size)])
                j = int(pool_in[rng.integers(pool_in.size)])
            row_out, row_in = int(sel_rows[i]), int(out_rows[j])
            if hist.swap_delta(row_out, row_in) < 0.0:
                hist.remove(row_out)
                hist.add(row_in)
                sel_rows[i], out_rows[j] = row_in, row_out
                swap_objectives.append(hist.objective())
        chosen_rows = [int(r) for r in sel_rows]

    return Selection(
        ids=tuple(sorted_ids[r] for r in chosen_rows),
        objective=swap_objectives[-1],
        trace={
            "greedy_objectives": tuple(greedy_objectives),
            "swap_objectives": tuple(swap_objectives),
        },
    )


# --- exact reference solver ----------------------------------------------------


def exact_sample(binned: BinnedDataset, m: int, size_cap: int = EXACT_SIZE_CAP) -> Selection:
    """Provably optimal selection via depth-first branch-and-bound.

    Refuses datasets larger than size_cap (default 24) — the search is
    exponential and exists to audit the heuristic, not to scale. The bound
    combines irreversible overshoot (occupancy already above target) with
    unreachable deficit (target above occupancy plus remaining supply).
    """
    n = len(binned)
    if n > size_cap:
        raise ValueError(f"exact solver capped at {size_cap} images, got {n}")
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")

    order = np.argsort(np.array(binned.ids))
    sorted_ids = [binned.ids[i] for i in order]
    work = BinnedDataset(
        ids=tuple(sorted_ids),
        dim_names=binned.dim_names,
        bin_index=binned.bin_index[order],
        n_bins=binned.n_bins,
    )
    hist = _Histogrammer(work, m)
    t = hist.targets
    rows = hist.flat

    # avail[i] = per-bin supply among items i..n-1
    avail = np.zeros((n + 1, hist.total_bins), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        avail[i] = avail[i + 1]
        avail[i][rows[i]] += 1

    warm = uniform_sample(binned, m, seed=0)
    best_obj = warm.objective
    best_rows: list[int] | None = None

    occ = hist.occupancy
    chosen: list[int] = []

    def bound(i: int) -> float:
        over = np.maximum(occ - t, 0.0)
        short = np.maximum(t - occ - avail[i], 0.0)
        return float(over.sum() + short.sum())

    def dfs(i: int, rem: int) -> None:
        nonlocal best_obj, best_rows
        if rem == 0:
            obj = float(np.abs(occ - t).sum())
            if obj < best_obj:
                best_obj = obj
                best_rows = list(chosen)
            return
        if n - i < rem:
            return
        if bound(i) >= best_obj:
            return
        # include item i
        occ[rows[i]] += 1
        chosen.append(i)
        dfs(i + 1, rem - 1)
        chosen.pop()
        occ[rows[i]] -= 1
        # exclude item i
        dfs(i + 1, rem)

    dfs(0, m)
    if best_rows is None:
        # warm start was already optimal
        ids = warm.ids
        best_obj = warm.objective
    else:
        ids = tuple(sorted_ids[r] for r in best_rows)
    return Selection(ids=ids, objective=best_obj)


def enumerate_optimum(binned: BinnedDataset, m: int) -> float:
    """Brute-force optimal objective by full subset enumeration (tiny audits)."""
    n = len(binned)
    hist = _Histogrammer(binned, m)
    best = np.inf
    for combo in itertools.combinations(range(n), m):
        occ = np.zeros(hist.total_bins, dtype=np.int64)
        for row in combo:
            occ[hist.flat[row]] += 1
        obj = float(np.abs(occ - hist.targets).sum())
        if obj < best:
            best = obj
    return best


# --- near-duplicate removal -----------------------------------------------------


@dataclass
class DistanceSpace:
    """Normalized indicator coordinates plus the cluster label per image.

    Scalar indicators are remapped to [0, 1] by the population min/max
    (fixed once, here); a constant indicator maps to 0. Distance between
    two images is the Euclidean distance over the seven coordinates with
    one extra additive term: +1 under the root when the content clusters
    differ, so the distance is bounded by sqrt(8).
    """

    ids: tuple[str, ...]
    coords: np.ndarray  # (n, 7) in [0, 1]
    clusters: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.ids)


def build_distance_space(vectors) -> DistanceSpace:
    vectors = list(vectors)
    if not vectors:
        raise ValueError("no vectors")
    ids = tuple(v.image_id for v in vectors)
    cols = []
    for name in SCALAR_INDICATORS:
        raw = [v.scalar(name) for v in vectors]
        missing = [v.image_id for v, r in zip(vectors, raw) if r is None]
        if missing:
            raise ValueError(
                f"indicator {name!r} missing for {missing[0]!r}; distances need all seven"
            )
        cols.append(np.array(raw, dtype=np.float64))
    coords = np.stack(cols, axis=1)
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    coords = np.where(span > 0, (coords - lo) / safe, 0.0)

    clusters = []
    for v in vectors:
        if v.cluster_id is None:
            raise ValueError(f"cluster id missing for {v.image_id!r}")
        clusters.append(v.cluster_id)
    return DistanceSpace(ids=ids, coords=coords, clusters=np.array(clusters, dtype=np.int64))


def pair_distance(space: DistanceSpace, i: int, j: int) -> float:
    d2 = float(((space.coords[i] - space.coords[j]) ** 2).sum())
    if space.clusters[i] != space.clusters[j]:
        d2 += 1.0
    return d2**0.5


@dataclass
class DedupResult:
    selection: Selection
    removals: tuple[tuple[str, str, float], ...]  # (removed_id, kept_id, distance)


def dedup(space: DistanceSpace, remove_count: int) -> DedupResult:
    """Iteratively delete one member of the globally closest remaining pair.

    All pairwise distances are fixed up front. Each round finds the closest
    pair still alive (ties resolved by the lexicographically smallest id
    pair) and removes the member with the larger id, remove_count times.
    Quadratic in the selection size by design.
    """
    n = len(space)
    if not 0 <= remove_count < n:
        raise ValueError(f"remove_count must be in [0, {n - 1}], got {remove_count}")
    if remove_count == 0:
        return DedupResult(Selection(ids=space.ids), ())

    # Work in lexicographic id order so index comparisons mirror id ones.
    order = np.argsort(np.array(space.ids))
    coords = space.coords[order]
    clusters = space.clusters[order]
    ids_sorted = [space.ids[i] for i in order]

    sq = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    sq += (clusters[:, None] != clusters[None, :]).astype(np.float64)
    iu, ju = np.triu_indices(n, k=1)
    dist = np.sqrt(sq[iu, ju])
    # Primary key distance, then smaller id, then larger id.
    pair_order = np.lexsort((ju, iu, dist))

    alive = np.ones(n, dtype=bool)
    removals: list[tuple[str, str, float]] = []
    cursor = 0
    while len(removals) < remove_count:
        while cursor < pair_order.size:
            p = pair_order[cursor]
            if alive[iu[p]] and alive[ju[p]]:
                break
            cursor += 1
        p = pair_order[cursor]
        a, b = int(iu[p]), int(ju[p])  # a < b, so b has the larger id
        alive[b] = False
        removals.append((ids_sorted[b], ids_sorted[a], float(dist[p])))
        cursor += 1

    removed = {r[0] for r in removals}
    kept = tuple(i for i in space.ids if i not in removed)
    return DedupResult(Selection(ids=kept), tuple(removals))
