import json

import pytest
from click.testing import CliRunner

from streetsurvey import fixture_path
from streetsurvey.cli import main
from streetsurvey.codebook import parse_codebook
from streetsurvey.geo import Status, points_from_csv, points_to_csv
from streetsurvey.service import ResponseLog, Response, new_response_id, utc_now_iso
from streetsurvey.tasking import import_tasks_csv

from conftest import full_answers

REGION = fixture_path("quito_region.geojson")
CODEBOOK = fixture_path("quito_codebook.json")


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def sample_points(runner, tmp_path, n=40, seed=7):
    out = tmp_path / "points.csv"
    run_ok(runner, ["sample", "--region", REGION, "--n", str(n), "--seed", str(seed),
                    "--min-spacing-m", "50", "--out", str(out)])
    return out


def make_footprints_for(points_csv, path, skip=0):
    """A square footprint centered on each point, skipping the first `skip`."""
    points = points_from_csv(points_csv.read_bytes())
    features = []
    for i, p in enumerate(points[skip:]):
        lat, lon, h = p.location.lat, p.location.lon, 0.0001
        features.append({
            "type": "Feature",
            "properties": {"building_id": f"B{i + 1:04d}"},
            "geometry": {"type": "Polygon", "coordinates": [[
                [lon - h, lat - h], [lon + h, lat - h], [lon + h, lat + h],
                [lon - h, lat + h], [lon - h, lat - h]]]},
        })
    path.write_text(json.dumps({"type": "FeatureCollection", "features": features}))


class TestSample:
    def test_writes_requested_rows(self, runner, tmp_path):
        out = sample_points(runner, tmp_path, n=25)
        assert len(out.read_text().splitlines()) == 26
        manifest = json.loads((tmp_path / "points.csv.manifest.json").read_text())
        assert manifest["seed"] == 7

    def test_rerun_byte_identical(self, runner, tmp_path):
        a = sample_points(runner, tmp_path, n=15).read_bytes()
        b = sample_points(runner, tmp_path, n=15).read_bytes()
        assert a == b

    def test_seed_required(self, runner, tmp_path):
        result = runner.invoke(main, ["sample", "--region", REGION, "--n", "5",
                                      "--out", str(tmp_path / "p.csv")])
        assert result.exit_code == 2


class TestRelocateAndTasks:
    def test_pipeline_to_tasks(self, runner, tmp_path):
        points = sample_points(runner, tmp_path, n=20)
        footprints = tmp_path / "footprints.geojson"
        make_footprints_for(points, footprints, skip=2)
        adjusted = tmp_path / "adjusted.csv"
        run_ok(runner, ["relocate", "--points", str(points), "--footprints", str(footprints),
                        "--out", str(adjusted)])
        out_points = points_from_csv(adjusted.read_bytes())
        assert len(out_points) == 20
        assert sum(1 for p in out_points if p.status == Status.RELOCATED) >= 18

        tasks_csv = tmp_path / "tasks.csv"
        run_ok(runner, ["tasks", "--points", str(adjusted), "--codebook", CODEBOOK,
                        "--image-url-template", "https://img/{point_id}.png",
                        "--k", "1", "--batch-id", "b1", "--raters", "a,b,c",
                        "--seed", "3", "--out", str(tasks_csv)])
        batch, assignment = import_tasks_csv(tasks_csv.read_bytes(), "1.1")
        assert all(len(rs) == 1 for rs in assignment.values())
        manifest = json.loads((tmp_path / "tasks.csv.manifest.json").read_text())
        assert manifest["codebook_version"] == "1.1"

    def test_inputs_not_mutated(self, runner, tmp_path):
        points = sample_points(runner, tmp_path, n=10)
        before = points.read_bytes()
        footprints = tmp_path / "footprints.geojson"
        make_footprints_for(points, footprints)
        run_ok(runner, ["relocate", "--points", str(points), "--footprints", str(footprints),
                        "--out", str(tmp_path / "adjusted.csv")])
        assert points.read_bytes() == before


def scripted_log(tmp_path, batch, raters, agree=True):
    """Write a response log as if raters had labeled every task."""
    log = ResponseLog(str(tmp_path / "responses.jsonl"))
    for t in batch.tasks:
        for i, rater in enumerate(raters):
            condition = "fair" if agree or i == 0 else "poor"
            log.append(Response(new_response_id(), t.task_id, rater, "1.1",
                                full_answers(condition=condition), utc_now_iso()))
    log.close()
    return tmp_path / "responses.jsonl"


class TestAnalysisCommands:
    @pytest.fixture
    def pipeline(self, runner, tmp_path):
        points = sample_points(runner, tmp_path, n=12)
        footprints = tmp_path / "footprints.geojson"
        make_footprints_for(points, footprints)
        adjusted = tmp_path / "adjusted.csv"
        run_ok(runner, ["relocate", "--points", str(points), "--footprints", str(footprints),
                        "--out", str(adjusted)])
        tasks_csv = tmp_path / "tasks.csv"
        run_ok(runner, ["tasks", "--points", str(adjusted), "--codebook", CODEBOOK,
                        "--image-url-template", "https://img/{point_id}.png",
                        "--k", "3", "--batch-id", "b1", "--raters", "a,b,c",
                        "--seed", "3", "--out", str(tasks_csv)])
        batch, _ = import_tasks_csv(tasks_csv.read_bytes(), "1.1")
        log = scripted_log(tmp_path, batch, ["a", "b", "c"])
        return adjusted, tasks_csv, log

    def test_stats_output(self, runner, tmp_path, pipeline):
        adjusted, tasks_csv, log = pipeline
        result = run_ok(runner, ["stats", "--log", str(log), "--points", str(adjusted),
                                 "--codebook", CODEBOOK, "--batch", str(tasks_csv),
                                 "--json-out", str(tmp_path / "stats.json")])
        assert "collected 12" in result.output
        doc = json.loads((tmp_path / "stats.json").read_text())
        assert doc["coverage"]["planned"] == 12

    def test_kappa_all_agree(self, runner, tmp_path, pipeline):
        adjusted, tasks_csv, log = pipeline
        result = run_ok(runner, ["kappa", "--log", str(log), "--codebook", CODEBOOK,
                                 "--batch", str(tasks_csv),
                                 "--json-out", str(tmp_path / "kappa.json")])
        doc = json.loads((tmp_path / "kappa.json").read_text())
        singles = [v for v in doc["variables"] if v["kind"] == "single_choice"]
        assert singles
        assert all(v["fleiss_kappa"] == 1.0 for v in singles)

    def test_export_geojson(self, runner, tmp_path, pipeline):
        adjusted, tasks_csv, log = pipeline
        out = tmp_path / "drains.geojson"
        run_ok(runner, ["export", "--log", str(log), "--points", str(adjusted),
                        "--codebook", CODEBOOK, "--batch", str(tasks_csv),
                        "--variable", "drains", "--out", str(out)])
        obj = json.loads(out.read_text())
        assert len(obj["features"]) == 12
        assert all(f["properties"]["variable"] == "drains" for f in obj["features"])
