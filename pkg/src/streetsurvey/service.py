"""Labeling server core: task queue, submission validation, append-only log.

Responses are persisted as JSON Lines, one record per line, fsynced before the
submission is acknowledged. Restart recovery replays the log; a truncated
trailing record (crash mid-write) is dropped with a warning, anything else
corrupt is an error.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Optional

from .codebook import Answer, Codebook, Violation, answers_from_json, answers_to_json, validate_response_shape
from .tasking import Assignment, Task, TaskBatch

logger = logging.getLogger(__name__)


class LogCorruptionError(RuntimeError):
    """A non-trailing log record is unreadable; the log is damaged beyond a crash tail."""


@dataclass(frozen=True)
class Response:
    response_id: str
    task_id: str
    rater_id: str
    codebook_version: str
    answers: dict[str, Answer]
    submitted_at: str  # ISO-8601 UTC
    duration_s: Optional[float] = None
    amends: Optional[str] = None
    no_coverage: bool = False

    def to_json(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "response_id": self.response_id,
            "task_id": self.task_id,
            "rater_id": self.rater_id,
            "codebook_version": self.codebook_version,
            "answers": answers_to_json(self.answers),
            "submitted_at": self.submitted_at,
        }
        if self.duration_s is not None:
            rec["duration_s"] = self.duration_s
        if self.amends is not None:
            rec["amends"] = self.amends
        if self.no_coverage:
            rec["no_coverage"] = True
        return rec

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Response":
        return Response(
            response_id=obj["response_id"],
            task_id=obj["task_id"],
            rater_id=obj["rater_id"],
            codebook_version=obj.get("codebook_version", ""),
            answers=answers_from_json(obj.get("answers", {})),
            submitted_at=obj["submitted_at"],
            duration_s=obj.get("duration_s"),
            amends=obj.get("amends"),
            no_coverage=bool(obj.get("no_coverage", False)),
        )


def new_response_id() -> str:
    return str(uuid.uuid4())


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class ResponseLog:
    """Append-only JSON-Lines file; append is atomic w.r.t. replay semantics."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "ab")

    def append(self, response: Response) -> None:
        line = json.dumps(response.to_json(), ensure_ascii=False) + "\n"
        self._fh.write(line.encode("utf-8"))
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def replay_log(data: bytes) -> list[Response]:
    """Reconstruct responses from log bytes; tolerates one truncated trailing record."""
    responses: list[Response] = []
    lines = data.split(b"\n")
    # a well-formed log ends with a newline, so the final split element is empty
    trailing = lines[-1]
    complete, has_tail = lines[:-1], bool(trailing)
    for i, raw in enumerate(complete):
        if not raw.strip():
            continue
        try:
            responses.append(Response.from_json(json.loads(raw.decode("utf-8"))))
        except (ValueError, KeyError) as e:
            raise LogCorruptionError(f"corrupt log record at line {i + 1}: {e}") from e
    if has_tail:
        try:
            responses.append(Response.from_json(json.loads(trailing.decode("utf-8"))))
        except (ValueError, KeyError):
            logger.warning("discarding truncated trailing log record (%d bytes)", len(trailing))
    return responses


def replay_log_file(path: str) -> list[Response]:
    if not os.path.exists(path):
        return []
    with open(path, "rb") as fh:
        return replay_log(fh.read())


@dataclass(frozen=True)
class SubmitResult:
    status: str  # accepted | conflict | rejected
    response_id: Optional[str] = None
    violations: tuple[Violation, ...] = ()
    reason: Optional[str] = None


@dataclass(frozen=True)
class ProgressSnapshot:
    total_tasks: int
    total_expected_responses: int
    responses_received: int
    per_rater: dict[str, dict[str, int]]
    mean_duration_s: Optional[float]

    def to_json(self) -> dict[str, Any]:
        return {
            "total_tasks": self.total_tasks,
            "total_expected_responses": self.total_expected_responses,
            "responses_received": self.responses_received,
            "per_rater": self.per_rater,
            "mean_duration_s": self.mean_duration_s,
        }


class UnknownRaterError(KeyError):
    pass


class LabelServer:
    """In-process labeling state machine; submissions serialize through one lock."""

    def __init__(self, codebook: Codebook, batch: TaskBatch, assignment: Assignment,
                 log_path: str):
        self.codebook = codebook
        self.batch = batch
        self.assignment = assignment
        self._lock = threading.Lock()
        self._by_id: dict[str, Response] = {}
        # (task_id, rater_id) -> response_id at the head of the amendment chain
        self._current: dict[tuple[str, str], str] = {}
        for r in replay_log_file(log_path):
            self._apply(r)
        self._log = ResponseLog(log_path)

    def _apply(self, r: Response) -> None:
        self._by_id[r.response_id] = r
        self._current[(r.task_id, r.rater_id)] = r.response_id

    # -- reads ---------------------------------------------------------

    def raters(self) -> set[str]:
        out: set[str] = set()
        for rs in self.assignment.values():
            out |= rs
        return out

    def accepted_responses(self) -> list[Response]:
        """Latest-amendment-wins view, ordered by (task_id, rater_id)."""
        with self._lock:
            items = sorted(self._current.items())
            return [self._by_id[rid] for _, rid in items]

    def next_task(self, rater_id: str) -> Optional[Task]:
        with self._lock:
            return self._next_task_locked(rater_id)

    def _next_task_locked(self, rater_id: str) -> Optional[Task]:
        if rater_id not in self.raters():
            raise UnknownRaterError(rater_id)
        counts = {t.task_id: 0 for t in self.batch.tasks}
        for (task_id, _rater) in self._current:
            if task_id in counts:
                counts[task_id] += 1
        pending = [
            tid for tid, rs in self.assignment.items()
            if rater_id in rs and (tid, rater_id) not in self._current
        ]
        if not pending:
            return None
        best = min(pending, key=lambda tid: (counts[tid], tid))
        return self.batch.task(best)

    def progress(self) -> ProgressSnapshot:
        with self._lock:
            per_rater = {}
            for rater in sorted(self.raters()):
                assigned = sum(1 for rs in self.assignment.values() if rater in rs)
                completed = sum(1 for (tid, rid) in self._current if rid == rater)
                per_rater[rater] = {"assigned": assigned, "completed": completed}
            durations = [
                self._by_id[rid].duration_s
                for rid in self._current.values()
                if self._by_id[rid].duration_s is not None
            ]
            mean = sum(durations) / len(durations) if durations else None
            return ProgressSnapshot(
                total_tasks=len(self.batch.tasks),
                total_expected_responses=sum(t.replication_k for t in self.batch.tasks),
                responses_received=len(self._current),
                per_rater=per_rater,
                mean_duration_s=mean,
            )

    # -- writes --------------------------------------------------------

    def submit(self, r: Response) -> SubmitResult:
        with self._lock:
            try:
                self.batch.task(r.task_id)
            except KeyError:
                return SubmitResult("rejected", reason=f"unknown task {r.task_id!r}")
            if r.rater_id not in self.assignment.get(r.task_id, set()):
                return SubmitResult("rejected",
                                    reason=f"rater {r.rater_id!r} not assigned to {r.task_id!r}")
            if r.amends is not None:
                prior = self._by_id.get(r.amends)
                if prior is None or (prior.task_id, prior.rater_id) != (r.task_id, r.rater_id):
                    return SubmitResult("rejected",
                                        reason=f"amends unknown response {r.amends!r}")
            elif (r.task_id, r.rater_id) in self._current:
                return SubmitResult("conflict", reason="duplicate (task, rater) submission")
            if not r.no_coverage:
                violations = validate_response_shape(self.codebook, r.answers)
                if violations:
                    return SubmitResult("rejected", violations=tuple(violations))
            # durable before acknowledged
            self._log.append(r)
            self._apply(r)
            return SubmitResult("accepted", response_id=r.response_id)

    def close(self) -> None:
        self._log.close()
