"""Turn relocated sample points into labeling tasks and rater assignments."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .geo import GeoPoint, SamplePoint, Status

GSV_URL_FORMAT = "https://www.google.com/maps/@?api=1&map_action=pano&viewpoint={lat:.6f},{lon:.6f}"

Assignment = dict[str, set[str]]  # task_id -> rater ids


class TaskingError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    task_id: str
    point_id: str
    location: GeoPoint
    image_url: str
    gsv_url: str
    replication_k: int


@dataclass(frozen=True)
class TaskBatch:
    batch_id: str
    codebook_version: str
    tasks: tuple[Task, ...]

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise KeyError(task_id)


def gsv_url(location: GeoPoint) -> str:
    return GSV_URL_FORMAT.format(lat=location.lat, lon=location.lon)


def build_tasks(points: Sequence[SamplePoint], image_url_template: str,
                replication_k: int, batch_id: str, codebook_version: str = "") -> TaskBatch:
    """One task per relocated point; refuses raw or excluded points."""
    if "{point_id}" not in image_url_template:
        raise TaskingError("image_url_template must contain the {point_id} placeholder")
    if replication_k < 1:
        raise TaskingError("replication_k must be >= 1")
    if not points:
        raise TaskingError("cannot build an empty batch: no points given")
    tasks = []
    seen_points = set()
    for p in points:
        if p.status != Status.RELOCATED:
            raise TaskingError(f"point {p.point_id} has status {p.status.value}, expected relocated")
        if p.point_id in seen_points:
            raise TaskingError(f"duplicate point_id {p.point_id!r}")
        seen_points.add(p.point_id)
        # coordinates are serialized at 6 decimals everywhere; snap here so the
        # CSV, GSV URL and GeoJSON agree bit-for-bit
        loc = GeoPoint(round(p.location.lat, 6), round(p.location.lon, 6))
        tasks.append(Task(
            task_id=f"{batch_id}-{p.point_id}",
            point_id=p.point_id,
            location=loc,
            image_url=image_url_template.replace("{point_id}", p.point_id),
            gsv_url=gsv_url(loc),
            replication_k=replication_k,
        ))
    return TaskBatch(batch_id=batch_id, codebook_version=codebook_version, tasks=tuple(tasks))


def assign_raters(batch: TaskBatch, raters: Sequence[str], seed: int) -> Assignment:
    """Assign each task to exactly k distinct raters, workloads balanced within 1.

    Cyclic assignment over a seeded shuffle of the rater pool: task i takes the
    next k raters from a rotating cursor, which bounds any two workloads by 1.
    """
    raters = list(raters)
    if len(set(raters)) != len(raters):
        raise TaskingError("duplicate rater ids")
    ks = {t.replication_k for t in batch.tasks}
    need = max(ks, default=0)
    if len(raters) < need:
        raise TaskingError(f"need at least {need} raters, got {len(raters)}")
    order = sorted(raters)
    random.Random(seed).shuffle(order)
    assignment: Assignment = {}
    cursor = 0
    for task in sorted(batch.tasks, key=lambda t: t.task_id):
        chosen = set()
        for _ in range(task.replication_k):
            chosen.add(order[cursor % len(order)])
            cursor += 1
        assignment[task.task_id] = chosen
    return assignment


TASKS_CSV_HEADER = ["task_id", "point_id", "lat", "lon", "image_url", "gsv_url",
                    "replication_k", "assigned_raters"]


def export_tasks_csv(batch: TaskBatch, assignment: Assignment) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TASKS_CSV_HEADER)
    for t in batch.tasks:
        w.writerow([
            t.task_id,
            t.point_id,
            f"{t.location.lat:.6f}",
            f"{t.location.lon:.6f}",
            t.image_url,
            t.gsv_url,
            t.replication_k,
            "|".join(sorted(assignment.get(t.task_id, set()))),
        ])
    return buf.getvalue().encode("utf-8")


def import_tasks_csv(data: bytes | str, codebook_version: str = "") -> tuple[TaskBatch, Assignment]:
    """Inverse of export_tasks_csv; batch_id is recovered from the task ids.

    The codebook version travels in a sidecar manifest, not the CSV itself.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(data)))
    if not rows:
        raise TaskingError("empty task CSV")
    if rows[0] != TASKS_CSV_HEADER:
        raise TaskingError(f"unknown task CSV header {rows[0]!r}")
    tasks: list[Task] = []
    assignment: Assignment = {}
    seen = set()
    batch_id = None
    for row in rows[1:]:
        if len(row) != len(TASKS_CSV_HEADER):
            raise TaskingError(f"malformed task CSV row: {row!r}")
        task_id, point_id, lat, lon, image_url, gsv, k, assigned = row
        if task_id in seen:
            raise TaskingError(f"duplicate task_id {task_id!r}")
        seen.add(task_id)
        suffix = "-" + point_id
        if not task_id.endswith(suffix):
            raise TaskingError(f"task_id {task_id!r} does not end with -{point_id}")
        this_batch = task_id[: -len(suffix)]
        if batch_id is None:
            batch_id = this_batch
        elif this_batch != batch_id:
            raise TaskingError(f"mixed batch ids {batch_id!r} and {this_batch!r}")
        tasks.append(Task(
            task_id=task_id,
            point_id=point_id,
            location=GeoPoint(float(lat), float(lon)),
            image_url=image_url,
            gsv_url=gsv,
            replication_k=int(k),
        ))
        assignment[task_id] = set(assigned.split("|")) if assigned else set()
    if batch_id is None:
        raise TaskingError("task CSV contains no rows")
    batch = TaskBatch(batch_id=batch_id, codebook_version=codebook_version, tasks=tuple(tasks))
    return batch, assignment


def all_raters(assignment: Assignment) -> set[str]:
    out: set[str] = set()
    for rs in assignment.values():
        out |= rs
    return out
