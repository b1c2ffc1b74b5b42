import json
import threading

import pytest

from streetsurvey.codebook import Answer
from streetsurvey.service import (
    LabelServer,
    LogCorruptionError,
    Response,
    new_response_id,
    replay_log,
    replay_log_file,
    utc_now_iso,
)
from streetsurvey.tasking import assign_raters, build_tasks
from streetsurvey.geo import GeoPoint, SamplePoint, Status

from conftest import full_answers


def make_server(tmp_path, n_tasks=5, k=1, raters=("alice", "bob", "carol"), codebook=None):
    points = [SamplePoint(f"P{i:04d}", GeoPoint(-0.18 + i * 1e-3, -78.47),
                          Status.RELOCATED, source_building_id=f"B{i}")
              for i in range(1, n_tasks + 1)]
    batch = build_tasks(points, "https://img/{point_id}.png", k, "b1", codebook.version)
    assignment = assign_raters(batch, list(raters), seed=1)
    return LabelServer(codebook, batch, assignment, str(tmp_path / "responses.jsonl"))


def response(task_id, rater_id, answers=None, duration=None, amends=None, no_coverage=False):
    return Response(
        response_id=new_response_id(),
        task_id=task_id,
        rater_id=rater_id,
        codebook_version="1.1",
        answers=answers if answers is not None else full_answers(),
        submitted_at=utc_now_iso(),
        duration_s=duration,
        amends=amends,
        no_coverage=no_coverage,
    )


class TestSubmit:
    def test_accept_grows_log(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        result = server.submit(response(task.task_id, "alice"))
        assert result.status == "accepted"
        assert len(replay_log_file(str(tmp_path / "responses.jsonl"))) == 1

    def test_duplicate_is_conflict(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        assert server.submit(response(task.task_id, "alice")).status == "accepted"
        assert server.submit(response(task.task_id, "alice")).status == "conflict"

    def test_bad_sill_code_rejected_with_violation(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        bad = response(task.task_id, "alice", answers=full_answers(sill="basement"))
        result = server.submit(bad)
        assert result.status == "rejected"
        assert [v.variable_key for v in result.violations] == ["sill_height"]

    def test_unassigned_rater_rejected(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=1, raters=("alice", "bob", "carol", "dan", "eve"),
                             codebook=quito_codebook)
        victim = next(t for t in server.batch.tasks
                      if "alice" not in server.assignment[t.task_id])
        assert server.submit(response(victim.task_id, "alice")).status == "rejected"

    def test_unknown_task_rejected(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, codebook=quito_codebook)
        assert server.submit(response("b1-P9999", "alice")).status == "rejected"

    def test_amendment_supersedes(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        first = response(task.task_id, "alice", answers=full_answers(floors=2))
        assert server.submit(first).status == "accepted"
        fix = response(task.task_id, "alice", answers=full_answers(floors=3),
                       amends=first.response_id)
        assert server.submit(fix).status == "accepted"
        current = [r for r in server.accepted_responses()
                   if (r.task_id, r.rater_id) == (task.task_id, "alice")]
        assert len(current) == 1
        assert current[0].answers["floors"] == Answer(count=3)

    def test_amending_unknown_response_rejected(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, codebook=quito_codebook)
        task = server.next_task("alice")
        bad = response(task.task_id, "alice", amends="nope")
        assert server.submit(bad).status == "rejected"

    def test_no_coverage_flag_bypasses_shape_validation(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        flag = response(task.task_id, "alice", answers={}, no_coverage=True)
        assert server.submit(flag).status == "accepted"

    def test_concurrent_duplicates_single_accept(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        task = server.next_task("alice")
        results = []
        threads = [threading.Thread(
            target=lambda: results.append(server.submit(response(task.task_id, "alice"))))
            for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        statuses = sorted(r.status for r in results)
        assert statuses.count("accepted") == 1
        assert statuses.count("conflict") == 7


class TestNextTask:
    def test_tie_breaks_by_task_id(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        assert server.next_task("alice").task_id == "b1-P0001"

    def test_idempotent_without_submit(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        assert server.next_task("alice") == server.next_task("alice")

    def test_prefers_least_answered_task(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, k=3, codebook=quito_codebook)
        # bob and carol both answer P0001; alice should now get P0002 first
        server.submit(response("b1-P0001", "bob"))
        server.submit(response("b1-P0001", "carol"))
        assert server.next_task("alice").task_id == "b1-P0002"

    def test_exhaustion_returns_none(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, n_tasks=2, k=3, codebook=quito_codebook)
        for _ in range(2):
            task = server.next_task("alice")
            server.submit(response(task.task_id, "alice"))
        assert server.next_task("alice") is None

    def test_unknown_rater(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, codebook=quito_codebook)
        with pytest.raises(KeyError):
            server.next_task("mallory")

    def test_matches_brute_force_ordering(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, n_tasks=6, k=3, codebook=quito_codebook)
        import random
        rng = random.Random(5)
        raters = ["alice", "bob", "carol"]
        for _ in range(12):
            rater = rng.choice(raters)
            got = server.next_task(rater)
            # oracle: recompute (response count, task_id) over the accepted set
            counts = {t.task_id: 0 for t in server.batch.tasks}
            done = set()
            for r in server.accepted_responses():
                counts[r.task_id] += 1
                done.add((r.task_id, r.rater_id))
            pending = [t for t in server.batch.tasks
                       if rater in server.assignment[t.task_id]
                       and (t.task_id, rater) not in done]
            expected = min(pending, key=lambda t: (counts[t.task_id], t.task_id), default=None)
            assert got == expected
            if got is not None:
                server.submit(response(got.task_id, rater))


class TestProgress:
    def test_fresh_batch_counts(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, n_tasks=20, k=3, codebook=quito_codebook)
        snap = server.progress()
        assert snap.total_tasks == 20
        assert snap.total_expected_responses == 60
        assert snap.responses_received == 0

    def test_complete_batch(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, n_tasks=4, k=3, codebook=quito_codebook)
        for rater in ("alice", "bob", "carol"):
            while (task := server.next_task(rater)) is not None:
                server.submit(response(task.task_id, rater, duration=240.0))
        snap = server.progress()
        assert snap.responses_received == snap.total_expected_responses == 12
        assert snap.mean_duration_s == 240.0
        assert all(v["completed"] == v["assigned"] for v in snap.per_rater.values())

    def test_monotonic_received(self, tmp_path, quito_codebook):
        server = make_server(tmp_path, n_tasks=3, k=3, codebook=quito_codebook)
        seen = [server.progress().responses_received]
        for rater in ("alice", "bob"):
            task = server.next_task(rater)
            server.submit(response(task.task_id, rater))
            seen.append(server.progress().responses_received)
        assert seen == sorted(seen)


class TestReplay:
    def test_empty_log(self):
        assert replay_log(b"") == []

    def test_restart_preserves_accepted(self, tmp_path, quito_codebook):
        log = tmp_path / "responses.jsonl"
        server = make_server(tmp_path, n_tasks=20, k=3, codebook=quito_codebook)
        for rater in ("alice", "bob", "carol"):
            while (task := server.next_task(rater)) is not None:
                server.submit(response(task.task_id, rater))
        before = server.progress()
        server.close()

        points = server.batch  # reuse the same batch/assignment
        revived = LabelServer(quito_codebook, server.batch, server.assignment, str(log))
        after = revived.progress()
        assert after.responses_received == before.responses_received == 60
        assert after.to_json() == before.to_json()

    def test_truncated_tail_dropped_with_warning(self, tmp_path, quito_codebook, caplog):
        log = tmp_path / "responses.jsonl"
        server = make_server(tmp_path, n_tasks=20, k=3, codebook=quito_codebook)
        for rater in ("alice", "bob", "carol"):
            while (task := server.next_task(rater)) is not None:
                server.submit(response(task.task_id, rater))
        server.close()
        data = log.read_bytes()
        assert data.endswith(b"\n")
        truncated = data[:-25]  # cut mid-record
        import logging
        with caplog.at_level(logging.WARNING, logger="streetsurvey.service"):
            responses = replay_log(truncated)
        assert len(responses) == 59
        assert any("truncated" in rec.message for rec in caplog.records)

    def test_corrupt_interior_record_raises(self):
        good = json.dumps({
            "response_id": "x", "task_id": "t", "rater_id": "r",
            "answers": {}, "submitted_at": "now",
        })
        data = (good + "\n<garbage>\n" + good.replace('"x"', '"y"') + "\n").encode()
        with pytest.raises(LogCorruptionError):
            replay_log(data)
