"""Crowd study analytics.

Covers the full rating workflow: mapping discrete 1..5 scores onto
[1, 100], per-image MOS, screening of unreliable workers, alignment of
crowd scores against a small expert panel, bootstrap reliability curves,
agreement statistics, quiz-question generation, and a cross-validated
check that content features predict MOS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .content_features import FeatureMatrix
from .records import IngestError, atomic_write_text

SCORE_LEVELS = (1, 2, 3, 4, 5)
MAPPED_MIN, MAPPED_MAX = 1.0, 100.0
_MAP_GAIN = (MAPPED_MAX - MAPPED_MIN) / (SCORE_LEVELS[-1] - SCORE_LEVELS[0])  # 24.75

DEFAULT_PLCC_THRESHOLD = 0.5
DEFAULT_MIN_RATINGS = 10
DEFAULT_CLICK_RATIO = 2.0
DEFAULT_QUIZ_THRESHOLD = 0.70
MAX_VALID_ANSWERS = 3


@dataclass(frozen=True)
class RatingEvent:
    worker_id: str
    image_id: str
    score: int
    timestamp: float = 0.0
    is_test: bool = False

    def __post_init__(self) -> None:
        if self.score not in SCORE_LEVELS:
            raise ValueError(
                f"score must be one of {SCORE_LEVELS}, got {self.score!r} "
                f"(worker {self.worker_id!r}, image {self.image_id!r})"
            )


@dataclass
class MOSRecord:
    image_id: str
    mos: float
    std: float
    n_ratings: int


@dataclass
class WorkerProfile:
    worker_id: str
    score_counts: tuple[int, int, int, int, int]
    plcc_vs_crowd: float | None = None
    test_accuracy: float | None = None
    flags: frozenset[str] = frozenset()

    @property
    def n_ratings(self) -> int:
        return sum(self.score_counts)


@dataclass(frozen=True)
class TestQuestion:
    image_id: str
    valid_answers: tuple[int, ...]


def map_score(score: float) -> float:
    """Affine map of the 1..5 scale onto [1, 100]; 3 maps to 50.5."""
    if not 1 <= score <= 5:
        raise ValueError(f"score outside [1, 5]: {score!r}")
    return MAPPED_MIN + _MAP_GAIN * (score - 1)


def compute_mos(
    ratings: Iterable[RatingEvent],
    exclude_workers: Iterable[str] = (),
    exclude_test: bool = False,
) -> tuple[list[MOSRecord], tuple[str, ...]]:
    """Per-image mean and population std of mapped scores.

    Ratings from excluded workers (and, optionally, quiz answers) are
    dropped first. Images left with zero surviving ratings come back in
    the residue tuple instead of the records.
    """
    excluded = set(exclude_workers)
    by_image: dict[str, list[float]] = {}
    for ev in ratings:
        by_image.setdefault(ev.image_id, [])
        if ev.worker_id in excluded or (exclude_test and ev.is_test):
            continue
        by_image[ev.image_id].append(map_score(ev.score))

    records, residue = [], []
    for image_id in sorted(by_image):
        values = by_image[image_id]
        if not values:
            residue.append(image_id)
            continue
        arr = np.array(values)
        records.append(
            MOSRecord(
                image_id=image_id,
                mos=float(arr.mean()),
                std=float(arr.std()),
                n_ratings=arr.size,
            )
        )
    return records, tuple(residue)


def build_worker_profiles(ratings: Iterable[RatingEvent]) -> list[WorkerProfile]:
    counts: dict[str, list[int]] = {}
    for ev in ratings:
        c = counts.setdefault(ev.worker_id, [0, 0, 0, 0, 0])
        c[ev.score - 1] += 1
    return [
        WorkerProfile(worker_id=w, score_counts=tuple(counts[w]))
        for w in sorted(counts)
    ]


# --- screening -----------------------------------------------------------------


def plcc(x, y) -> float:
    """Pearson correlation; needs >= 3 points and spread on both sides."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"mismatched inputs: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    if float(x.std()) == 0.0 or float(y.std()) == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.corrcoef(x, y)[0, 1])


def srocc(x, y) -> float:
    """Spearman rank correlation with average ranks on ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"mismatched inputs: {x.shape} vs {y.shape}")
    return plcc(rankdata(x), rankdata(y))


def screen_low_correlation(
    ratings: Sequence[RatingEvent],
    threshold: float = DEFAULT_PLCC_THRESHOLD,
    min_ratings: int = DEFAULT_MIN_RATINGS,
) -> tuple[frozenset[str], dict[str, float | None]]:
    """Flag workers whose scores track the crowd too weakly.

    The crowd MOS is computed once from all workers (screening must not
    feed on its own output). A worker with at least min_ratings rated
    images is flagged when the correlation between their scores and the
    crowd MOS over those images is below the threshold, or undefined
    because either side is constant. Workers under min_ratings are left
    alone. Returns the flags plus each evaluated worker's correlation
    (None where undefined).
    """
    if min_ratings < 3:
        raise ValueError(f"min_ratings must be >= 3, got {min_ratings}")
    crowd, _ = compute_mos(ratings)
    crowd_mos = {r.image_id: r.mos for r in crowd}

    per_worker: dict[str, list[tuple[float, float]]] = {}
    for ev in ratings:
        per_worker.setdefault(ev.worker_id, []).append(
            (map_score(ev.score), crowd_mos[ev.image_id])
        )

    flagged: set[str] = set()
    correlations: dict[str, float | None] = {}
    for worker, pairs in per_worker.items():
        if len(pairs) < min_ratings:
            continue
        own = np.array([p[0] for p in pairs])
        ref = np.array([p[1] for p in pairs])
        if float(own.std()) == 0.0 or float(ref.std()) == 0.0:
            correlations[worker] = None
            flagged.add(worker)
            continue
        r = plcc(own, ref)
        correlations[worker] = r
        if r < threshold:
            flagged.add(worker)
    return frozenset(flagged), correlations


def screen_line_clickers(
    profiles: Iterable[WorkerProfile], max_ratio: float = DEFAULT_CLICK_RATIO
) -> frozenset[str]:
    """Flag workers who hammer one answer: most-used score count over the
    sum of the rest above max_ratio. A worker using a single score
    throughout has an infinite ratio and is always flagged."""
    flagged = set()
    for p in profiles:
        total = p.n_ratings
        if total == 0:
            raise ValueError(f"worker {p.worker_id!r} has no ratings")
        top = max(p.score_counts)
        rest = total - top
        ratio = math.inf if rest == 0 else top / rest
        if ratio > max_ratio:
            flagged.add(p.worker_id)
    return frozenset(flagged)


def screen_workers(
    ratings: Sequence[RatingEvent],
    questions: Mapping[str, TestQuestion] | None = None,
    plcc_threshold: float = DEFAULT_PLCC_THRESHOLD,
    min_ratings: int = DEFAULT_MIN_RATINGS,
    click_ratio: float = DEFAULT_CLICK_RATIO,
    quiz_threshold: float = DEFAULT_QUIZ_THRESHOLD,
) -> list[WorkerProfile]:
    """Run all screens on raw ratings and attach flags to worker profiles.

    Both statistical screens see the full unfiltered data; MOS is meant to
    be recomputed once afterwards with the union of flags excluded.
    """
    profiles = build_worker_profiles(ratings)
    low_corr, correlations = screen_low_correlation(ratings, plcc_threshold, min_ratings)
    clickers = screen_line_clickers(profiles, max_ratio=click_ratio)
    quiz = (
        worker_accuracy(ratings, questions, threshold=quiz_threshold)
        if questions
        else {}
    )

    out = []
    for p in profiles:
        flags = set()
        if p.worker_id in low_corr:
            flags.add("low_correlation")
        if p.worker_id in clickers:
            flags.add("line_clicker")
        accuracy = None
        if p.worker_id in quiz:
            accuracy = quiz[p.worker_id].accuracy
            if not quiz[p.worker_id].passed:
                flags.add("failed_quiz")
        out.append(
            WorkerProfile(
                worker_id=p.worker_id,
                score_counts=p.score_counts,
                plcc_vs_crowd=correlations.get(p.worker_id),
                test_accuracy=accuracy,
                flags=frozenset(flags),
            )
        )
    return out


# --- expert alignment and reliability --------------------------------------------


@dataclass
class ExpertSet:
    """Scores from a small fixed panel: one row per image, one column per
    expert, on the raw 1..5 scale."""

    image_ids: tuple[str, ...]
    scores: np.ndarray  # (n_images, n_experts)

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise ValueError(f"expert scores must be 2-D, got {self.scores.shape}")
        if len(self.image_ids) != self.scores.shape[0]:
            raise ValueError("image count does not match score rows")
        if np.any(self.scores < 1) or np.any(self.scores > 5):
            raise ValueError("expert scores outside [1, 5]")

    def mos(self, mapped: bool = True) -> dict[str, float]:
        vals = _map_array(self.scores) if mapped else self.scores
        return {i: float(m) for i, m in zip(self.image_ids, vals.mean(axis=1))}

    def std(self, mapped: bool = True) -> dict[str, float]:
        vals = _map_array(self.scores) if mapped else self.scores
        return {i: float(s) for i, s in zip(self.image_ids, vals.std(axis=1))}


def _map_array(scores: np.ndarray) -> np.ndarray:
    return MAPPED_MIN + _MAP_GAIN * (scores - 1.0)


def fit_alignment(x, y) -> tuple[float, float]:
    """Least-squares line y ~ slope * x + intercept; constant x raises."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError(f"need matched 1-D inputs of >= 2 points, got {x.shape}")
    if float(x.std()) == 0.0:
        raise ValueError("alignment undefined: predictor is constant")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass
class RmseCurvePoint:
    group_size: int
    rmse: float
    ci_low: float
    ci_high: float


def bootstrap_rmse(
    scores_by_image: Mapping[str, Sequence[float]],
    expert_mos: Mapping[str, float],
    group_sizes: Sequence[int],
    n_reps: int = 200,
    seed: int = 0,
) -> list[RmseCurvePoint]:
    """How the crowd-vs-expert RMSE shrinks with ratings per image.

    For each group size s and each replicate, every image's crowd MOS is
    recomputed from s ratings resampled with replacement, aligned onto the
    expert scale with a fresh least-squares fit, and scored by RMSE
    against the expert MOS. The curve reports the replicate mean with a
    2.5/97.5 percentile band. Every evaluated image must hold at least
    max(group_sizes) ratings.
    """
    if not group_sizes:
        raise ValueError("no group sizes")
    if min(group_sizes) < 1:
        raise ValueError(f"group sizes must be >= 1: {group_sizes}")
    if n_reps < 2:
        raise ValueError(f"need at least 2 replicates, got {n_reps}")
    ids = sorted(expert_mos)
    if not ids:
        raise ValueError("no expert images")
    biggest = max(group_sizes)
    pools = []
    for image_id in ids:
        pool = np.asarray(scores_by_image.get(image_id, ()), dtype=np.float64)
        if pool.size < biggest:
            raise ValueError(
                f"image {image_id!r} has {pool.size} crowd ratings, "
                f"need >= {biggest} for resampling"
            )
        pools.append(pool)
    expert = np.array([expert_mos[i] for i in ids])

    curve = []
    for s in group_sizes:
        rng = np.random.default_rng([seed, s])
        mos_reps = np.empty((n_reps, len(ids)))
        for col, pool in enumerate(pools):
            draws = rng.integers(0, pool.size, size=(n_reps, s))
            mos_reps[:, col] = pool[draws].mean(axis=1)
        rmses = np.empty(n_reps)
        for rep in range(n_reps):
            slope, intercept = fit_alignment(mos_reps[rep], expert)
            err = slope * mos_reps[rep] + intercept - expert
            rmses[rep] = math.sqrt(float((err**2).mean()))
        curve.append(
            RmseCurvePoint(
                group_size=int(s),
                rmse=float(rmses.mean()),
                ci_low=float(np.percentile(rmses, 2.5)),
                ci_high=float(np.percentile(rmses, 97.5)),
            )
        )
    return curve


def expert_bootstrap_std(scores: np.ndarray, n_reps: int = 1000, seed: int = 0) -> float:
    """Stability of the expert panel itself: resample the panel columns
    with replacement, track each image's MOS across replicates, and
    aggregate the per-image standard deviations as an RMS."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValueError(f"need an (images, experts >= 2) matrix, got {scores.shape}")
    rng = np.random.default_rng(seed)
    n_img, k = scores.shape
    mos_reps = np.empty((n_reps, n_img))
    for rep in range(n_reps):
        cols = rng.integers(0, k, size=k)
        mos_reps[rep] = scores[:, cols].mean(axis=1)
    per_image_std = mos_reps.std(axis=0)
    return float(np.sqrt((per_image_std**2).mean()))


@dataclass
class ZScoreReport:
    z_by_image: dict[str, float]
    within_2_fraction: float


def error_zscores(
    aligned_crowd: Mapping[str, float], expert_mos: Mapping[str, float], expert_std: float
) -> ZScoreReport:
    """Crowd-minus-expert errors in units of the expert panel's own spread."""
    if expert_std <= 0:
        raise ValueError(f"expert_std must be positive: {expert_std}")
    missing = sorted(set(expert_mos) - set(aligned_crowd))
    if missing:
        raise ValueError(f"aligned crowd MOS missing for {missing[0]!r}")
    z = {
        image_id: (aligned_crowd[image_id] - expert_mos[image_id]) / expert_std
        for image_id in sorted(expert_mos)
    }
    if not z:
        raise ValueError("no images to compare")
    within = sum(1 for v in z.values() if abs(v) <= 2.0) / len(z)
    return ZScoreReport(z_by_image=z, within_2_fraction=within)


# --- quiz questions ----------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def valid_answer_set(mos: float, std: float) -> tuple[int, ...]:
    """Acceptable 1..5 answers: every integer some point of [mos-std,
    mos+std] rounds to, kept inside the scale, capped to the 3 choices
    nearest round(mos) with ties toward the lower score. Rounding is
    half-up. The set is contiguous and always contains round(mos)."""
    if not 1 <= mos <= 5:
        raise ValueError(f"expert MOS outside [1, 5]: {mos}")
    if std < 0:
        raise ValueError(f"negative std: {std}")
    lo = max(1, _round_half_up(mos - std))
    hi = min(5, _round_half_up(mos + std))
    answers = list(range(lo, hi + 1))
    if len(answers) > MAX_VALID_ANSWERS:
        center = _round_half_up(mos)
        answers.sort(key=lambda k: (abs(k - center), k))
        answers = sorted(answers[:MAX_VALID_ANSWERS])
    return tuple(answers)


def generate_test_questions(experts: ExpertSet) -> list[TestQuestion]:
    mos = experts.mos(mapped=False)
    std = experts.std(mapped=False)
    return [
        TestQuestion(image_id=i, valid_answers=valid_answer_set(mos[i], std[i]))
        for i in experts.image_ids
    ]


@dataclass
class QuizResult:
    worker_id: str
    n_answered: int
    n_correct: int
    accuracy: float
    passed: bool


def worker_accuracy(
    ratings: Iterable[RatingEvent],
    questions: Mapping[str, TestQuestion],
    threshold: float = DEFAULT_QUIZ_THRESHOLD,
) -> dict[str, QuizResult]:
    """Grade quiz answers per worker; passing demands accuracy strictly
    above the threshold (0.70 means 7/10 fails). Workers with no quiz
    answers are absent from the result."""
    answered: dict[str, list[bool]] = {}
    for ev in ratings:
        if not ev.is_test:
            continue
        q = questions.get(ev.image_id)
        if q is None:
            raise ValueError(
                f"rating marked as quiz answer but image {ev.image_id!r} has no question"
            )
        answered.setdefault(ev.worker_id, []).append(ev.score in q.valid_answers)

    out = {}
    for worker, marks in sorted(answered.items()):
        correct = sum(marks)
        accuracy = correct / len(marks)
        out[worker] = QuizResult(
            worker_id=worker,
            n_answered=len(marks),
            n_correct=correct,
            accuracy=accuracy,
            passed=accuracy > threshold,
        )
    return out


# --- agreement ---------------------------------------------------------------------


def icc_oneway(groups) -> float:
    """One-way random-effects intraclass correlation, single rating.

    Accepts per-image score collections (sizes may differ; rater identity
    is not used). Uses the unbalanced-design average group size. Clamped
    to [-1, 1]; zero within-group variance gives 1.0, zero between-group
    variance gives 0.0.
    """
    if isinstance(groups, Mapping):
        groups = [groups[k] for k in sorted(groups)]
    data = [np.asarray(g, dtype=np.float64) for g in groups]
    n = len(data)
    if n < 2:
        raise ValueError(f"need >= 2 images, got {n}")
    sizes = np.array([g.size for g in data])
    if sizes.min() < 1:
        raise ValueError("empty rating group")
    total = int(sizes.sum())
    if total - n < 1:
        raise ValueError("need at least one image with >= 2 ratings")

    grand = float(np.concatenate(data).mean())
    means = np.array([float(g.mean()) for g in data])
    ssb = float((sizes * (means - grand) ** 2).sum())
    ssw = float(sum(((g - m) ** 2).sum() for g, m in zip(data, means)))
    msb = ssb / (n - 1)
    msw = ssw / (total - n)
    k0 = (total - float((sizes**2).sum()) / total) / (n - 1)

    if msw == 0.0:
        return 1.0 if msb > 0.0 else 0.0
    value = (msb - msw) / (msb + (k0 - 1.0) * msw)
    return float(min(1.0, max(-1.0, value)))


# --- content-feature evaluation -------------------------------------------------------


class RidgeRegressor:
    """Closed-form ridge with intercept; the default pluggable regressor."""

    def __init__(self, alpha: float = 1.0):
        if alpha <= 0:
            raise ValueError(f"alpha must be positive: {alpha}")
        self.alpha = alpha
        self._coef: np.ndarray | None = None
        self._intercept = 0.0
        self._x_mean: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RidgeRegressor":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self._x_mean = x.mean(axis=0)
        y_mean = float(y.mean())
        xc = x - self._x_mean
        gram = xc.T @ xc + self.alpha * np.eye(x.shape[1])
        self._coef = np.linalg.solve(gram, xc.T @ (y - y_mean))
        self._intercept = y_mean
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        if self._coef is None:
            raise RuntimeError("predict before fit")
        x = np.asarray(x, dtype=np.float64)
        return (x - self._x_mean) @ self._coef + self._intercept


@dataclass
class CrossValReport:
    srocc_mean: float
    srocc_std: float
    plcc_mean: float
    plcc_std: float
    n_reps: int
    per_rep: tuple[tuple[float, float], ...] = field(default_factory=tuple, repr=False)


def cross_validate(
    features: FeatureMatrix,
    mos: Mapping[str, float],
    train_fraction: float = 0.8,
    n_reps: int = 100,
    seed: int = 0,
    regressor=None,
) -> CrossValReport:
    """Repeated random-split evaluation of features as MOS predictors.

    Each replicate draws a fresh seeded permutation, fits the regressor
    (anything with fit/predict) on the train share, and scores rank and
    linear correlation on the held-out images.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1): {train_fraction}")
    shared = [i for i in features.ids if i in mos]
    if len(shared) < 5:
        raise ValueError(f"only {len(shared)} ids shared between features and MOS")
    sub = features.subset(shared)
    y = np.array([mos[i] for i in shared])
    x = sub.vectors
    n = len(shared)
    n_train = int(math.floor(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"degenerate split: {n_train} train of {n}")
    model = regressor if regressor is not None else RidgeRegressor()

    per_rep = []
    for rep in range(n_reps):
        rng = np.random.default_rng([seed, rep])
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        model.fit(x[tr], y[tr])
        pred = np.asarray(model.predict(x[te]), dtype=np.float64)
        per_rep.append((srocc(pred, y[te]), plcc(pred, y[te])))

    s = np.array([p[0] for p in per_rep])
    p = np.array([p[1] for p in per_rep])
    return CrossValReport(
        srocc_mean=float(s.mean()),
        srocc_std=float(s.std()),
        plcc_mean=float(p.mean()),
        plcc_std=float(p.std()),
        n_reps=n_reps,
        per_rep=tuple(per_rep),
    )


# --- file formats -------------------------------------------------------------------


def read_ratings(path) -> list[RatingEvent]:
    """Ratings file: worker_id, image_id, score, timestamp, is_test per line."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise IngestError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            events.append(
                RatingEvent(
                    worker_id=parts[0],
                    image_id=parts[1],
                    score=int(parts[2]),
                    timestamp=float(parts[3]),
                    is_test=parts[4] == "1",
                )
            )
    return events


def write_ratings(events: Iterable[RatingEvent], path) -> None:
    lines = [
        "\t".join(
            (
                ev.worker_id,
                ev.image_id,
                str(ev.score),
                repr(float(ev.timestamp)),
                "1" if ev.is_test else "0",
            )
        )
        for ev in events
    ]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_expert_table(path) -> ExpertSet:
    """Expert file: image_id, comma-joined scores; rows must be rectangular."""
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise IngestError(f"{path}:{lineno}: expected 2 fields")
            scores = [float(s) for s in parts[1].split(",")]
            if rows and len(scores) != len(rows[0]):
                raise IngestError(
                    f"{path}:{lineno}: {len(scores)} scores, expected {len(rows[0])}"
                )
            ids.append(parts[0])
            rows.append(scores)
    if not rows:
        raise IngestError(f"{path}: empty expert table")
    return ExpertSet(image_ids=tuple(ids), scores=np.array(rows))


def write_expert_table(experts: ExpertSet, path) -> None:
    lines = [
        image_id + "\t" + ",".join(repr(float(s)) for s in row)
        for image_id, row in zip(experts.image_ids, experts.scores)
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")
