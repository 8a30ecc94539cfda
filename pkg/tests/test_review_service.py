import json

import pytest
from fastapi.testclient import TestClient

from picsel.review_service import (
    DEFAULT_BATCH_SIZE,
    REMOVAL_REASONS,
    ReviewError,
    ReviewItem,
    ReviewQueue,
    create_app,
)


class Clock:
    def __init__(self, t=1000.0):
        self.t = t

    def __call__(self):
        return self.t


def make_queue(n=30, **kwargs):
    items = [ReviewItem(f"img{i:04d}") for i in range(n)]
    return ReviewQueue(items, **kwargs)


class TestLeasing:
    def test_batch_respects_queue_order_and_cap(self):
        q = make_queue(50)
        batch = q.next_batch("alice", n=50)
        assert len(batch) == DEFAULT_BATCH_SIZE
        assert [it.image_id for it in batch] == [f"img{i:04d}" for i in range(20)]

    def test_two_reviewers_get_disjoint_items(self):
        q = make_queue(30)
        a = {it.image_id for it in q.next_batch("alice", n=10)}
        b = {it.image_id for it in q.next_batch("bob", n=10)}
        assert a.isdisjoint(b)
        assert len(a) == len(b) == 10

    def test_exhausted_pool_returns_short_batch(self):
        q = make_queue(5)
        assert len(q.next_batch("alice", n=20)) == 5
        assert q.next_batch("bob", n=20) == []

    def test_lease_expiry_reopens_items(self):
        clock = Clock()
        q = make_queue(3, lease_seconds=60.0, now_fn=clock)
        first = q.next_batch("alice", n=3)
        assert len(first) == 3
        clock.t += 59.0
        assert q.next_batch("bob", n=3) == []
        clock.t += 2.0  # past expiry
        again = q.next_batch("bob", n=3)
        assert [it.image_id for it in again] == [it.image_id for it in first]

    def test_decided_items_never_re_leased(self):
        q = make_queue(2)
        q.next_batch("alice", n=2)
        q.submit("img0000", "kept", reviewer="alice")
        clock_independent = q.next_batch("alice", n=2)
        assert clock_independent == []  # img0001 still leased, img0000 decided

    def test_validation(self):
        q = make_queue(2)
        with pytest.raises(ReviewError):
            q.next_batch("", n=5)
        with pytest.raises(ReviewError):
            q.next_batch("alice", n=0)
        with pytest.raises(ValueError, match="duplicate"):
            ReviewQueue([ReviewItem("a"), ReviewItem("a")])


class TestVerdicts:
    def test_keep_and_remove_flow(self):
        q = make_queue(3)
        kept = q.submit("img0000", "kept", reviewer="alice")
        removed = q.submit("img0001", "removed", reason="duplicate", reviewer="alice")
        assert kept.seq == 1 and removed.seq == 2
        assert q.latest("img0000").status == "kept"
        assert q.latest("img0001").reason == "duplicate"
        assert q.latest("img0002") is None

    def test_submit_releases_lease(self):
        q = make_queue(1)
        q.next_batch("alice", n=1)
        q.submit("img0000", "removed", reason="other", reviewer="alice")
        # resubmission by someone else is allowed once the lease is gone
        v = q.submit("img0000", "kept", reviewer="bob")
        assert v.status == "kept"

    def test_foreign_lease_blocks_submit(self):
        q = make_queue(1)
        q.next_batch("alice", n=1)
        with pytest.raises(ReviewError) as exc:
            q.submit("img0000", "kept", reviewer="bob")
        assert exc.value.code == 409

    def test_last_write_wins_with_history(self):
        q = make_queue(1)
        q.submit("img0000", "kept", reviewer="alice")
        q.submit("img0000", "removed", reason="inappropriate", reviewer="bob")
        hist = q.history("img0000")
        assert len(hist) == 2
        assert [v.status for v in hist] == ["kept", "removed"]
        assert q.latest("img0000").reviewer == "bob"

    def test_rejections(self):
        q = make_queue(1)
        with pytest.raises(ReviewError) as e404:
            q.submit("ghost", "kept")
        assert e404.value.code == 404
        with pytest.raises(ReviewError):
            q.submit("img0000", "maybe")
        with pytest.raises(ReviewError):
            q.submit("img0000", "removed", reason="ugly")
        with pytest.raises(ReviewError):
            q.submit("img0000", "removed")  # removal needs a reason
        with pytest.raises(ReviewError, match="no reason"):
            q.submit("img0000", "kept", reason="duplicate")


class TestStatsAndFinalize:
    def test_stats_track_latest_only(self):
        clock = Clock()
        q = make_queue(6, now_fn=clock)
        q.next_batch("alice", n=2)
        q.submit("img0000", "kept", reviewer="alice")
        q.submit("img0002", "removed", reason="duplicate")
        q.submit("img0002", "removed", reason="other")  # reason flips
        s = q.stats()
        assert s["total"] == 6
        assert s["kept"] == 1
        assert s["removed"] == 1
        assert s["by_reason"]["other"] == 1
        assert s["by_reason"]["duplicate"] == 0
        assert s["leased"] == 1  # img0001 leased, img0000 decided
        assert s["pending"] == 4

    def test_finalize_requires_all_decided(self):
        q = make_queue(3)
        q.submit("img0000", "kept")
        with pytest.raises(ReviewError) as exc:
            q.finalize()
        assert exc.value.code == 409

    def test_finalize_force_defaults_pending_to_kept(self):
        q = make_queue(4)
        q.submit("img0001", "removed", reason="text_screenshot")
        out = q.finalize(force=True)
        assert out["kept"] == ["img0000", "img0002", "img0003"]
        assert out["removed"]["text_screenshot"] == ["img0001"]
        assert out["counts"] == {
            "total": 4, "kept": 3, "removed": 1, "forced_keep": 3,
        }

    def test_finalize_is_pure_over_latest(self):
        q = make_queue(3)
        for i in range(3):
            q.submit(f"img{i:04d}", "kept")
        q.submit("img0001", "removed", reason="under_exposed")
        assert q.finalize() == q.finalize()
        assert q.finalize()["kept"] == ["img0000", "img0002"]


class TestPersistence:
    def test_log_replay_restores_state(self, tmp_path):
        log = tmp_path / "verdicts.jsonl"
        q = make_queue(4, log_path=log)
        q.submit("img0000", "kept", reviewer="alice")
        q.submit("img0001", "removed", reason="duplicate", reviewer="alice")
        q.submit("img0001", "kept", reviewer="bob")

        fresh = make_queue(4, log_path=log)
        assert fresh.latest("img0000").status == "kept"
        assert fresh.latest("img0001").status == "kept"
        assert len(fresh.history("img0001")) == 2
        # sequence counter continues past replayed entries
        v = fresh.submit("img0002", "kept")
        assert v.seq == 4

    def test_log_lines_are_json_records(self, tmp_path):
        log = tmp_path / "verdicts.jsonl"
        q = make_queue(2, log_path=log)
        q.submit("img0000", "removed", reason="other", reviewer="r")
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 1
        rec = json.loads(lines[0])
        assert rec["image_id"] == "img0000"
        assert rec["reason"] == "other"

    def test_replay_skips_unknown_ids(self, tmp_path):
        log = tmp_path / "verdicts.jsonl"
        log.write_text(
            json.dumps({"seq": 1, "image_id": "stranger", "status": "kept",
                        "reason": None, "reviewer": "x", "timestamp": 0.0}) + "\n"
            + json.dumps({"seq": 2, "image_id": "img0000", "status": "kept",
                          "reason": None, "reviewer": "x", "timestamp": 0.0}) + "\n"
        )
        q = make_queue(1, log_path=log)
        assert q.latest("img0000").status == "kept"
        assert q.history("stranger") == ()


@pytest.fixture()
def client(tmp_path):
    items = [ReviewItem(f"img{i:04d}") for i in range(25)]
    queue = ReviewQueue(items, log_path=tmp_path / "log.jsonl")
    return TestClient(create_app(queue)), queue


class TestHttpApi:
    def test_queue_next_returns_urls(self, client):
        http, _ = client
        resp = http.get("/queue/next", params={"reviewer": "alice", "n": 3})
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["items"]) == 3
        assert body["items"][0]["url"] == "/image/img0000"
        assert body["lease_seconds"] > 0

    def test_empty_reviewer_rejected(self, client):
        http, _ = client
        assert http.get("/queue/next").status_code == 422

    def test_verdict_roundtrip(self, client):
        http, queue = client
        resp = http.post("/verdict", json={
            "image_id": "img0003", "status": "removed",
            "reason": "inappropriate", "reviewer": "alice",
        })
        assert resp.status_code == 200
        assert resp.json()["ok"] is True
        assert queue.latest("img0003").reason == "inappropriate"

    def test_error_codes_surface(self, client):
        http, _ = client
        assert http.post("/verdict", json={
            "image_id": "ghost", "status": "kept"}).status_code == 404
        assert http.post("/verdict", json={
            "image_id": "img0000", "status": "meh"}).status_code == 422
        http.get("/queue/next", params={"reviewer": "alice", "n": 1})
        resp = http.post("/verdict", json={
            "image_id": "img0000", "status": "kept", "reviewer": "bob"})
        assert resp.status_code == 409

    def test_stats_and_finalize(self, client):
        http, _ = client
        for i in range(25):
            status = "removed" if i % 5 == 0 else "kept"
            body = {"image_id": f"img{i:04d}", "status": status, "reviewer": "a"}
            if status == "removed":
                body["reason"] = "duplicate"
            assert http.post("/verdict", json=body).status_code == 200
        stats = http.get("/stats").json()
        assert stats == {
            "total": 25, "pending": 0, "leased": 0, "kept": 20, "removed": 5,
            "by_reason": {r: (5 if r == "duplicate" else 0) for r in REMOVAL_REASONS},
        }
        final = http.post("/finalize", json={}).json()
        assert len(final["kept"]) == 20
        assert final["counts"]["removed"] == 5

    def test_finalize_conflict_without_force(self, client):
        http, _ = client
        assert http.post("/finalize", json={}).status_code == 409
        assert http.post("/finalize", json={"force": True}).status_code == 200

    def test_image_endpoint(self, tmp_path):
        img = tmp_path / "pic.jpg"
        img.write_bytes(b"\xff\xd8\xff\xe0fakejpeg")
        queue = ReviewQueue([
            ReviewItem("有", path=str(img)),
            ReviewItem("missing", path=str(tmp_path / "nope.jpg")),
            ReviewItem("pathless"),
        ])
        http = TestClient(create_app(queue))
        ok = http.get("/image/有")
        assert ok.status_code == 200
        assert ok.content == img.read_bytes()
        assert ok.headers["content-type"] == "image/jpeg"
        assert http.get("/image/missing").status_code == 404
        assert http.get("/image/pathless").status_code == 404
        assert http.get("/image/ghost").status_code == 404
