"""HTTP surface tests: scripted raters driving the service over real sockets."""

import threading
import time

import httpx
import pytest
import uvicorn

from streetsurvey.httpapi import create_app
from streetsurvey.service import LabelServer, replay_log_file
from streetsurvey.tasking import assign_raters, build_tasks
from streetsurvey.geo import GeoPoint, SamplePoint, Status

from conftest import full_answers


RATERS = ("alice", "bob", "carol")


def make_server(tmp_path, codebook, n_tasks=20, k=3):
    points = [SamplePoint(f"P{i:04d}", GeoPoint(-0.18 + i * 1e-3, -78.47),
                          Status.RELOCATED, source_building_id=f"B{i}")
              for i in range(1, n_tasks + 1)]
    batch = build_tasks(points, "https://img/{point_id}.png", k, "b1", codebook.version)
    assignment = assign_raters(batch, list(RATERS), seed=1)
    return LabelServer(codebook, batch, assignment, str(tmp_path / "responses.jsonl"))


class RunningServer:
    def __init__(self, app):
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        self.port = self.server.servers[0].sockets[0].getsockname()[1]
        self.base = f"http://127.0.0.1:{self.port}"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def http_server(tmp_path, quito_codebook):
    label_server = make_server(tmp_path, quito_codebook)
    running = RunningServer(create_app(label_server))
    yield running, label_server, tmp_path
    running.stop()


def answers_json():
    return {k: a.to_json() for k, a in full_answers().items()}


def label_everything(base, rater):
    """The scripted rater loop: fetch next task, submit, until 204."""
    submitted = 0
    with httpx.Client(base_url=base, timeout=10) as client:
        while True:
            r = client.get("/api/tasks/next", params={"rater": rater})
            if r.status_code == 204:
                return submitted
            assert r.status_code == 200
            task = r.json()
            resp = client.post("/api/responses", json={
                "task_id": task["task_id"],
                "rater_id": rater,
                "answers": answers_json(),
                "duration_s": 240.0,
            })
            assert resp.status_code == 201, resp.text
            submitted += 1


class TestHttpApi:
    def test_schema_endpoint(self, http_server, quito_codebook):
        running, _, _ = http_server
        doc = httpx.get(f"{running.base}/api/schema").json()
        assert doc["version"] == quito_codebook.version
        assert len(doc["variables"]) == len(quito_codebook.variables)

    def test_unknown_rater_404(self, http_server):
        running, _, _ = http_server
        r = httpx.get(f"{running.base}/api/tasks/next", params={"rater": "mallory"})
        assert r.status_code == 404

    def test_rejected_submission_422(self, http_server):
        running, _, _ = http_server
        task = httpx.get(f"{running.base}/api/tasks/next", params={"rater": "alice"}).json()
        bad = dict(answers_json(), sill_height={"choice": "basement"})
        r = httpx.post(f"{running.base}/api/responses", json={
            "task_id": task["task_id"], "rater_id": "alice", "answers": bad})
        assert r.status_code == 422
        assert r.json()["violations"][0]["variable_key"] == "sill_height"

    def test_three_scripted_raters_complete_batch(self, http_server):
        running, label_server, tmp_path = http_server
        counts = {}
        threads = [threading.Thread(target=lambda r=r: counts.__setitem__(
            r, label_everything(running.base, r))) for r in RATERS]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(counts.values()) == 60
        progress = httpx.get(f"{running.base}/api/progress").json()
        assert progress["responses_received"] == 60
        assert progress["total_expected_responses"] == 60
        assert progress["mean_duration_s"] == pytest.approx(240.0)
        export = httpx.get(f"{running.base}/api/export/responses").json()
        assert len(export["responses"]) == 60
        # durability: everything acknowledged is on disk
        assert len(replay_log_file(str(tmp_path / "responses.jsonl"))) == 60

    def test_concurrent_duplicate_submissions(self, http_server):
        running, _, _ = http_server
        task = httpx.get(f"{running.base}/api/tasks/next", params={"rater": "alice"}).json()
        body = {"task_id": task["task_id"], "rater_id": "alice", "answers": answers_json()}
        codes = []
        def post():
            codes.append(httpx.post(f"{running.base}/api/responses", json=body).status_code)
        threads = [threading.Thread(target=post) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert codes.count(201) == 1
        assert codes.count(409) == 5
