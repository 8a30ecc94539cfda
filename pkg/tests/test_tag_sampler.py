import numpy as np
import pytest

from picsel.records import ImageRecord, TagAssignment
from picsel.tag_sampler import build_tag_index, choose_quota, sample_by_quota


def record(image_id, tags):
    return ImageRecord(
        image_id=image_id,
        path=f"{image_id}.jpg",
        width=1000,
        height=700,
        byte_size=1,
        license="by",
        tags=tuple(TagAssignment(t, c) for t, c in tags),
    )


def random_corpus(seed, n_max=50, n_tags_max=8):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    vocab = [f"t{j}" for j in range(int(rng.integers(1, n_tags_max + 1)))]
    records = []
    for i in range(n):
        k = int(rng.integers(1, min(4, len(vocab)) + 1))
        chosen = rng.choice(len(vocab), size=k, replace=False)
        tags = [(vocab[j], round(float(rng.random()), 6)) for j in sorted(chosen)]
        records.append(record(f"img{i:03d}", tags))
    return records


def simulate(records, quota, size_cap=None):
    """Step-by-step reference: plain dicts and loops, no shared code paths."""
    occurrences = {}
    for r in records:
        for t in r.tags:
            occurrences.setdefault(t.tag, []).append((t.confidence, r.image_id))

    counts = {tag: len(v) for tag, v in occurrences.items()}
    picked = []
    fulfilled = {tag: 0 for tag in counts}

    def take(image_id):
        picked.append(image_id)
        for r in records:
            if r.image_id == image_id:
                for t in r.tags:
                    fulfilled[t.tag] += 1
        return size_cap is not None and len(picked) >= size_cap

    # every image touching an under-quota tag, by ascending id
    for r in sorted(records, key=lambda r: r.image_id):
        if not r.tags:
            continue
        if any(counts[t.tag] < quota for t in r.tags):
            if take(r.image_id):
                return picked, fulfilled

    # remaining tags by (count, name); top confidence first, ties by id
    for tag in sorted((t for t in counts if counts[t] >= quota),
                      key=lambda t: (counts[t], t)):
        ranked = sorted(occurrences[tag], key=lambda e: (-e[0], e[1]))
        for _, image_id in ranked:
            if fulfilled[tag] >= quota:
                break
            if image_id in picked:
                continue
            if take(image_id):
                return picked, fulfilled
    return picked, fulfilled


class TestIndex:
    def test_postings_sorted_by_confidence_then_id(self):
        idx = build_tag_index([
            record("b", [("x", 0.5)]),
            record("a", [("x", 0.5)]),
            record("c", [("x", 0.9)]),
        ])
        assert idx.postings["x"] == ("c", "a", "b")
        assert idx.phi == {"x": 3}

    def test_untagged_images_invisible(self):
        idx = build_tag_index([record("a", [("x", 0.5)]), record("b", [])])
        assert idx.tagged_ids == ("a",)

    def test_duplicate_id_rejected(self):
        with pytest.raises(ValueError):
            build_tag_index([record("a", [("x", 0.5)]), record("a", [("y", 0.5)])])


class TestSampleByQuota:
    def test_rare_tag_pulls_all_members(self):
        # tag "rare" occurs twice < quota 3: both images admitted outright
        records = [
            record("a", [("rare", 0.1)]),
            record("b", [("rare", 0.9), ("big", 0.5)]),
        ] + [record(f"f{i}", [("big", 0.2 + i / 100)]) for i in range(6)]
        sel = sample_by_quota(build_tag_index(records), quota=3)
        assert {"a", "b"}.issubset(sel.ids)
        assert sel.tag_fulfillment["rare"] == 2
        assert sel.tag_fulfillment["big"] >= 3

    def test_topup_counts_phase_one_members(self):
        # "big" has 10 holders, quota 4; two of them ride in via the rare tag,
        # so phase 2 must add exactly 2 more (highest confidence first).
        records = [record(f"r{i}", [("rare", 0.5), ("big", 0.01)]) for i in range(2)]
        records += [
            record(f"b{i}", [("big", conf)])
            for i, conf in enumerate([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
        ]
        sel = sample_by_quota(build_tag_index(records), quota=4)
        assert set(sel.ids) == {"r0", "r1", "b0", "b1"}
        assert sel.tag_fulfillment["big"] == 4

    def test_size_cap_stops_dead(self):
        records = [record(f"x{i}", [("t", 0.5)]) for i in range(9)]
        sel = sample_by_quota(build_tag_index(records), quota=20, size_cap=4)
        assert len(sel) == 4
        assert list(sel.ids) == sorted(sel.ids)  # ascending-id phase-1 order

    def test_quota_validation(self):
        idx = build_tag_index([record("a", [("x", 0.5)])])
        with pytest.raises(ValueError):
            sample_by_quota(idx, quota=0)
        with pytest.raises(ValueError):
            sample_by_quota(idx, quota=1, size_cap=0)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_reference_simulation(self, seed):
        records = random_corpus(seed)
        idx = build_tag_index(records)
        rng = np.random.default_rng([seed, 1])
        quota = int(rng.integers(1, 7))
        cap = int(rng.integers(1, len(records) + 1)) if rng.random() < 0.3 else None
        sel = sample_by_quota(idx, quota, size_cap=cap)
        ref_ids, ref_fulfilled = simulate(records, quota, size_cap=cap)
        assert list(sel.ids) == ref_ids
        assert sel.tag_fulfillment == ref_fulfilled

    @pytest.mark.parametrize("seed", range(12))
    def test_every_tag_reaches_min_quota_or_count(self, seed):
        records = random_corpus(seed + 100)
        idx = build_tag_index(records)
        for quota in (1, 2, 4, 8):
            sel = sample_by_quota(idx, quota)
            for tag, count in idx.phi.items():
                assert sel.tag_fulfillment[tag] >= min(quota, count)

    @pytest.mark.parametrize("seed", range(12))
    def test_size_monotone_in_quota(self, seed):
        idx = build_tag_index(random_corpus(seed + 200))
        sizes = [len(sample_by_quota(idx, q)) for q in range(1, 11)]
        assert sizes == sorted(sizes)


class TestChooseQuota:
    @pytest.mark.parametrize("seed", range(15))
    def test_matches_linear_scan(self, seed):
        records = random_corpus(seed + 300)
        idx = build_tag_index(records)
        rng = np.random.default_rng([seed, 2])
        floor = len(sample_by_quota(idx, 1))
        target = int(rng.integers(floor, len(idx.tags_of) + 1))
        tol = float(rng.choice([0.0, 0.1, 0.25]))
        best, sel = choose_quota(idx, target, tolerance=tol)

        budget = target * (1 + tol)
        q_max = max(idx.phi.values())
        expected = max(q for q in range(1, q_max + 1)
                       if len(sample_by_quota(idx, q)) <= budget)
        assert best == expected
        assert sel.quota_used == expected
        assert len(sel) <= budget

    def test_unreachable_target_raises(self):
        # quota 1 already selects 2 images; demanding 1 must fail loudly
        records = [record("a", [("x", 0.9)]), record("b", [("y", 0.8)])]
        idx = build_tag_index(records)
        with pytest.raises(ValueError, match="smallest achievable"):
            choose_quota(idx, target_size=1)

    def test_cap_applies_to_returned_selection(self):
        records = [record(f"x{i}", [("t", i / 10)]) for i in range(10)]
        idx = build_tag_index(records)
        best, sel = choose_quota(idx, target_size=8, size_cap=3)
        assert len(sel) == 3
        assert sel.quota_used == best
