"""Command-line pipeline: sample -> relocate -> tasks -> serve -> stats/kappa/export."""

from __future__ import annotations

import json
import os
import sys
import tempfile
from typing import Optional

import click

from . import analysis, geo, tasking
from .codebook import CodebookError, parse_codebook
from .service import LabelServer, LogCorruptionError, replay_log_file


def _atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out_path: str, manifest: dict) -> None:
    _atomic_write(out_path + ".manifest.json",
                  (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


@click.group()
def main() -> None:
    """Street-level flood-vulnerability labeling pipeline."""


@main.command()
@click.option("--region", "region_path", required=True, type=click.Path(exists=True),
              help="Study region GeoJSON (Polygon/MultiPolygon feature).")
@click.option("--n", default=500, show_default=True, help="Number of sample points.")
@click.option("--seed", required=True, type=int, help="PRNG seed (reproducibility contract).")
@click.option("--min-spacing-m", default=geo.MIN_SPACING_DEFAULT_M, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def sample(region_path: str, n: int, seed: int, min_spacing_m: float, out_path: str) -> None:
    """Generate random sample points inside the study region."""
    region = geo.load_region_geojson(_read_bytes(region_path))
    points = geo.random_points(region, n, seed, min_spacing_m)
    _atomic_write(out_path, geo.points_to_csv(points))
    _write_manifest(out_path, {
        "command": "sample", "region": region_path, "n": n,
        "seed": seed, "min_spacing_m": min_spacing_m,
    })
    click.echo(f"wrote {len(points)} points to {out_path}")


@main.command()
@click.option("--points", "points_path", required=True, type=click.Path(exists=True))
@click.option("--footprints", "footprints_path", required=True, type=click.Path(exists=True))
@click.option("--max-radius-m", default=geo.MAX_RELOCATE_RADIUS_DEFAULT_M, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def relocate(points_path: str, footprints_path: str, max_radius_m: float, out_path: str) -> None:
    """Move raw points to the nearest building footprint centroid."""
    points = geo.points_from_csv(_read_bytes(points_path))
    footprints = geo.load_footprints_geojson(_read_bytes(footprints_path))
    adjusted = [geo.relocate_to_nearest_footprint(p, footprints, max_radius_m) for p in points]
    _atomic_write(out_path, geo.points_to_csv(adjusted))
    moved = sum(1 for p in adjusted if p.status == geo.Status.RELOCATED)
    click.echo(f"relocated {moved}/{len(adjusted)} points to {out_path}")


@main.command()
@click.option("--points", "points_path", required=True, type=click.Path(exists=True))
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True))
@click.option("--image-url-template", required=True,
              help="Footprint imagery URL with a {point_id} placeholder.")
@click.option("--k", default=1, show_default=True, help="Raters per task.")
@click.option("--batch-id", required=True)
@click.option("--raters", required=True, help="Comma-separated rater ids.")
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def tasks(points_path: str, codebook_path: str, image_url_template: str, k: int,
          batch_id: str, raters: str, seed: int, out_path: str) -> None:
    """Build the task CSV (with rater assignment) from relocated points."""
    cb = parse_codebook(_read_bytes(codebook_path))
    points = [p for p in geo.points_from_csv(_read_bytes(points_path))
              if p.status == geo.Status.RELOCATED]
    batch = tasking.build_tasks(points, image_url_template, k, batch_id, cb.version)
    rater_ids = [r.strip() for r in raters.split(",") if r.strip()]
    assignment = tasking.assign_raters(batch, rater_ids, seed)
    _atomic_write(out_path, tasking.export_tasks_csv(batch, assignment))
    _write_manifest(out_path, {
        "command": "tasks", "batch_id": batch_id, "codebook_version": cb.version,
        "replication_k": k, "seed": seed, "raters": rater_ids,
    })
    click.echo(f"wrote {len(batch.tasks)} tasks to {out_path}")


def _load_batch(batch_path: str, codebook_version: str):
    return tasking.import_tasks_csv(_read_bytes(batch_path), codebook_version)


@main.command()
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True))
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True))
@click.option("--log", "log_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--static", "static_dir", default=None, type=click.Path(),
              help="Directory of web client assets served at /.")
def serve(batch_path: str, codebook_path: str, log_path: str, host: str, port: int,
          static_dir: Optional[str]) -> None:
    """Run the labeling HTTP service."""
    import uvicorn

    from .httpapi import create_app

    cb = parse_codebook(_read_bytes(codebook_path))
    batch, assignment = _load_batch(batch_path, cb.version)
    server = LabelServer(cb, batch, assignment, log_path)
    app = create_app(server, static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--points", "points_path", required=True, type=click.Path(exists=True))
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True))
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True))
@click.option("--json-out", "json_out", default=None, type=click.Path())
def stats(log_path: str, points_path: str, codebook_path: str, batch_path: str,
          json_out: Optional[str]) -> None:
    """Coverage accounting and per-variable frequencies from the response log."""
    cb = parse_codebook(_read_bytes(codebook_path))
    points = geo.points_from_csv(_read_bytes(points_path))
    batch, _ = _load_batch(batch_path, cb.version)
    responses = replay_log_file(log_path)
    coverage = analysis.coverage_stats(points, responses, batch)
    aggregated = analysis.aggregate_batch(responses, cb, batch)
    summaries = [analysis.frequency_table(aggregated, cb, v.key) for v in cb.variables]

    click.echo(f"planned {coverage['planned']}  collected {coverage['collected']}  "
               f"excluded {coverage['excluded']}  pending {coverage['pending']}")
    for reason, count in coverage["excluded_by_reason"].items():
        click.echo(f"  excluded ({reason}): {count}")
    for s in summaries:
        click.echo("")
        click.echo(f"{s.variable_key} [{s.kind}]  missing={s.n_missing}")
        if s.counts is not None:
            for code, count in s.counts.items():
                click.echo(f"  {code:<24}{count:>6}")
        if s.histogram is not None:
            for value, count in s.histogram.items():
                click.echo(f"  {value:<24}{count:>6}")
            click.echo(f"  min={s.min} max={s.max} mean={s.mean:.3f}")
    if json_out:
        doc = {
            "batch_id": batch.batch_id,
            "codebook_version": cb.version,
            "coverage": coverage,
            "variables": [s.to_json() for s in summaries],
        }
        _atomic_write(json_out, (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True))
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True))
@click.option("--tasks", "task_filter", default=None,
              help="Comma-separated task ids to restrict the report to.")
@click.option("--json-out", "json_out", default=None, type=click.Path())
def kappa(log_path: str, codebook_path: str, batch_path: str,
          task_filter: Optional[str], json_out: Optional[str]) -> None:
    """Inter-rater agreement report (Fleiss' kappa and percent agreement)."""
    cb = parse_codebook(_read_bytes(codebook_path))
    batch, _ = _load_batch(batch_path, cb.version)
    responses = replay_log_file(log_path)
    ids = None
    if task_filter:
        ids = {t.strip() for t in task_filter.split(",") if t.strip()}
    report = analysis.agreement_report(responses, cb, batch, ids)
    click.echo(analysis.render_agreement_text(report), nl=False)
    if json_out:
        _atomic_write(json_out, (json.dumps(report.to_json(), indent=2) + "\n").encode("utf-8"))


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--points", "points_path", required=True, type=click.Path(exists=True))
@click.option("--codebook", "codebook_path", required=True, type=click.Path(exists=True))
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True))
@click.option("--variable", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def export(log_path: str, points_path: str, codebook_path: str, batch_path: str,
           variable: str, out_path: str) -> None:
    """GeoJSON of collected points carrying the aggregated value of one variable."""
    cb = parse_codebook(_read_bytes(codebook_path))
    points = geo.points_from_csv(_read_bytes(points_path))
    batch, _ = _load_batch(batch_path, cb.version)
    responses = replay_log_file(log_path)
    aggregated = analysis.aggregate_batch(responses, cb, batch)
    if variable not in cb:
        raise analysis.AnalysisError(f"unknown variable {variable!r}")
    values = {}
    for pid, answers in aggregated.items():
        if variable in answers:
            ans = answers[variable]
            values[pid] = analysis._answer_value(ans)
            if isinstance(values[pid], tuple):
                values[pid] = list(values[pid])
    _atomic_write(out_path, analysis.export_geojson(points, values, variable))
    click.echo(f"wrote {len(values)} features to {out_path}")


def run() -> None:
    try:
        main(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.Abort:
        sys.exit(1)
    except (ValueError, RuntimeError, OSError, KeyError, CodebookError, LogCorruptionError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
