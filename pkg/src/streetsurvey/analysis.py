"""Post-collection analytics: coverage, frequencies, agreement, map export.

Everything here is a pure function over a replayed response snapshot.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from .codebook import Answer, Codebook, VariableDef
from .geo import SamplePoint, Status, ExclusionReason
from .service import Response
from .tasking import TaskBatch


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Rating matrix + agreement statistics


@dataclass(frozen=True)
class RatingMatrix:
    """Subjects x categories count matrix with a constant number of raters per subject."""

    variable_key: str
    categories: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    n_raters: int

    def __post_init__(self) -> None:
        if self.n_raters < 2:
            raise AnalysisError("rating matrix needs at least 2 raters per subject")
        if not self.counts:
            raise AnalysisError("rating matrix has no subjects")
        for i, row in enumerate(self.counts):
            if len(row) != len(self.categories):
                raise AnalysisError(f"row {i} has {len(row)} columns, expected {len(self.categories)}")
            if any(c < 0 for c in row):
                raise AnalysisError(f"row {i} has a negative count")
            if sum(row) != self.n_raters:
                raise AnalysisError(f"row {i} sums to {sum(row)}, expected {self.n_raters}")

    @property
    def n_subjects(self) -> int:
        return len(self.counts)

    def category_marginals(self) -> dict[str, int]:
        return {
            cat: sum(row[j] for row in self.counts)
            for j, cat in enumerate(self.categories)
        }


def percent_agreement(m: RatingMatrix) -> float:
    """Mean over subjects of the fraction of rater pairs that chose the same category."""
    n = m.n_raters
    total = 0.0
    for row in m.counts:
        total += sum(c * (c - 1) for c in row) / (n * (n - 1))
    return total / m.n_subjects


@dataclass(frozen=True)
class KappaResult:
    value: float
    degenerate: bool = False


def fleiss_kappa(m: RatingMatrix) -> KappaResult:
    """Chance-corrected multi-rater agreement over nominal categories.

    When all ratings fall in one category the chance-agreement term hits 1 and
    the ratio is undefined; that case reports 1.0 with a degenerate flag.
    """
    n = m.n_raters
    big_n = m.n_subjects
    p_i = [(sum(c * c for c in row) - n) / (n * (n - 1)) for row in m.counts]
    p_bar = sum(p_i) / big_n
    p_j = [sum(row[j] for row in m.counts) / (big_n * n) for j in range(len(m.categories))]
    p_e = sum(p * p for p in p_j)
    if p_e >= 1.0:
        return KappaResult(1.0, degenerate=True)
    return KappaResult((p_bar - p_e) / (1.0 - p_e))


# ---------------------------------------------------------------------------
# Aggregation of replicated responses


def _answer_value(ans: Answer) -> Any:
    if ans.choice is not None:
        return ans.choice
    if ans.choices is not None:
        return tuple(sorted(ans.choices))
    if ans.count is not None:
        return ans.count
    return ans.text


def aggregate_modal(responses: Sequence[Response], var: VariableDef) -> Optional[Answer]:
    """Collapse replicated responses for one task into a single answer.

    Choice kinds take the modal value (ties to the lexicographically smallest);
    counts take the lower median; free text concatenates in rater-id order.
    Returns None when no response answers the variable.
    """
    answered = [r for r in sorted(responses, key=lambda r: r.rater_id)
                if not r.no_coverage and var.key in r.answers]
    if not answered:
        return None
    answers = [r.answers[var.key] for r in answered]
    if var.kind == "free_text":
        return Answer(text="\n".join(a.text or "" for a in answers))
    if var.kind == "count":
        values = sorted(a.count for a in answers if a.count is not None)
        return Answer(count=values[(len(values) - 1) // 2])
    tally = Counter(_answer_value(a) for a in answers)
    best = min(tally, key=lambda v: (-tally[v], v))
    if var.kind == "single_choice":
        return Answer(choice=best)
    return Answer(choices=frozenset(best))


def responses_by_task(responses: Iterable[Response]) -> dict[str, list[Response]]:
    grouped: dict[str, list[Response]] = defaultdict(list)
    for r in responses:
        grouped[r.task_id].append(r)
    return dict(grouped)


def aggregate_batch(responses: Iterable[Response], cb: Codebook,
                    batch: TaskBatch) -> dict[str, dict[str, Answer]]:
    """Per-point aggregated answers for every collected point in the batch."""
    grouped = responses_by_task(responses)
    out: dict[str, dict[str, Answer]] = {}
    for task in batch.tasks:
        rs = [r for r in grouped.get(task.task_id, []) if not r.no_coverage]
        if not rs:
            continue
        values = {}
        for var in cb.variables:
            agg = aggregate_modal(rs, var)
            if agg is not None:
                values[var.key] = agg
        out[task.point_id] = values
    return out


# ---------------------------------------------------------------------------
# Coverage and frequencies


def coverage_stats(points: Sequence[SamplePoint], responses: Iterable[Response],
                   batch: TaskBatch) -> dict[str, Any]:
    """Planned / collected / excluded-by-reason accounting for one batch lineage."""
    point_ids = {p.point_id for p in points}
    task_point = {t.task_id: t.point_id for t in batch.tasks}
    real: set[str] = set()
    flagged: set[str] = set()
    for r in responses:
        pid = task_point.get(r.task_id)
        if pid is None or pid not in point_ids:
            raise AnalysisError(f"response {r.response_id} references unknown task/point {r.task_id!r}")
        (flagged if r.no_coverage else real).add(pid)
    excluded: Counter[str] = Counter()
    collected = 0
    pending = 0
    for p in points:
        if p.status == Status.EXCLUDED:
            assert p.exclusion_reason is not None
            excluded[p.exclusion_reason.value] += 1
        elif p.point_id in real:
            collected += 1
        elif p.point_id in flagged:
            excluded[ExclusionReason.NO_COVERAGE.value] += 1
        else:
            pending += 1
    return {
        "planned": len(points),
        "collected": collected,
        "excluded": sum(excluded.values()),
        "excluded_by_reason": dict(sorted(excluded.items())),
        "pending": pending,
    }


@dataclass(frozen=True)
class VariableSummary:
    variable_key: str
    kind: str
    n_missing: int
    counts: Optional[dict[str, int]] = None        # choice kinds
    histogram: Optional[dict[int, int]] = None     # count kind
    min: Optional[int] = None
    max: Optional[int] = None
    mean: Optional[float] = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"variable_key": self.variable_key, "kind": self.kind,
                               "n_missing": self.n_missing}
        if self.counts is not None:
            doc["counts"] = self.counts
        if self.histogram is not None:
            doc["histogram"] = {str(k): v for k, v in sorted(self.histogram.items())}
            doc["min"] = self.min
            doc["max"] = self.max
            doc["mean"] = self.mean
        return doc


def frequency_table(aggregated: Mapping[str, Mapping[str, Answer]], cb: Codebook,
                    variable_key: str) -> VariableSummary:
    """Distribution of a variable over per-point aggregated values.

    For multi_choice each selected code counts once per point, so the column
    sums can exceed the point count; the missing tally is still per point.
    """
    if variable_key not in cb:
        raise AnalysisError(f"unknown variable {variable_key!r}")
    var = cb[variable_key]
    values = [pv[variable_key] for pv in aggregated.values() if variable_key in pv]
    n_missing = len(aggregated) - len(values)
    if var.kind == "count":
        nums = [a.count for a in values if a.count is not None]
        hist = dict(sorted(Counter(nums).items()))
        return VariableSummary(
            variable_key=variable_key, kind=var.kind, n_missing=n_missing,
            histogram=hist,
            min=min(nums) if nums else None,
            max=max(nums) if nums else None,
            mean=sum(nums) / len(nums) if nums else None,
        )
    if var.kind in ("single_choice", "multi_choice"):
        counts = {code: 0 for code in var.option_codes()}
        for a in values:
            codes = [a.choice] if a.choice is not None else sorted(a.choices or ())
            for c in codes:
                counts[c] += 1
        return VariableSummary(variable_key=variable_key, kind=var.kind,
                               n_missing=n_missing, counts=counts)
    # free_text: only presence is summarized
    return VariableSummary(variable_key=variable_key, kind=var.kind, n_missing=n_missing,
                           counts={"answered": len(values)})


# ---------------------------------------------------------------------------
# Inter-rater agreement over a batch


@dataclass(frozen=True)
class VariableAgreement:
    variable_key: str
    kind: str
    n_subjects: int
    n_raters: int
    percent_agreement: float
    fleiss_kappa: Optional[float] = None
    kappa_degenerate: bool = False
    category_marginals: Optional[dict[str, int]] = None
    mean_abs_diff: Optional[float] = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "variable_key": self.variable_key,
            "kind": self.kind,
            "n_subjects": self.n_subjects,
            "n_raters": self.n_raters,
            "percent_agreement": self.percent_agreement,
        }
        if self.fleiss_kappa is not None:
            doc["fleiss_kappa"] = self.fleiss_kappa
            doc["kappa_degenerate"] = self.kappa_degenerate
        if self.category_marginals is not None:
            doc["category_marginals"] = self.category_marginals
        if self.mean_abs_diff is not None:
            doc["mean_abs_diff"] = self.mean_abs_diff
        return doc


@dataclass(frozen=True)
class AgreementReport:
    batch_id: str
    codebook_version: str
    variables: tuple[VariableAgreement, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "batch_id": self.batch_id,
            "codebook_version": self.codebook_version,
            "variables": [v.to_json() for v in self.variables],
        }


def build_rating_matrix(responses: Iterable[Response], cb: Codebook, variable_key: str,
                        n_raters: int) -> Optional[RatingMatrix]:
    """Counts matrix for a single_choice variable over fully replicated tasks.

    Tasks with fewer than n_raters answers for the variable are dropped so
    every row sums to the same rater count. Returns None when nothing qualifies.
    """
    var = cb[variable_key]
    if var.kind != "single_choice":
        raise AnalysisError(f"rating matrix requires a single_choice variable, got {var.kind}")
    categories = var.option_codes()
    index = {c: j for j, c in enumerate(categories)}
    grouped = responses_by_task(responses)
    rows = []
    for task_id in sorted(grouped):
        rs = [r for r in grouped[task_id]
              if not r.no_coverage and variable_key in r.answers]
        if len(rs) != n_raters:
            continue
        row = [0] * len(categories)
        for r in rs:
            code = r.answers[variable_key].choice
            if code not in index:
                raise AnalysisError(f"response {r.response_id} uses unknown code {code!r}")
            row[index[code]] += 1
        rows.append(tuple(row))
    if not rows:
        return None
    return RatingMatrix(variable_key=variable_key, categories=categories,
                        counts=tuple(rows), n_raters=n_raters)


def _pairwise_agreement(rows: list[list[Any]]) -> float:
    # rows: per subject, the list of rater values (constant length >= 2)
    total = 0.0
    for values in rows:
        n = len(values)
        pairs = n * (n - 1)
        agree = sum(c * (c - 1) for c in Counter(values).values())
        total += agree / pairs
    return total / len(rows)


def agreement_report(responses: Iterable[Response], cb: Codebook, batch: TaskBatch,
                     task_ids: Optional[set[str]] = None) -> AgreementReport:
    """Per-variable agreement over tasks with full replication (n = replication_k)."""
    responses = list(responses)
    if task_ids is not None:
        responses = [r for r in responses if r.task_id in task_ids]
    grouped = responses_by_task(responses)
    per_task_k = {t.task_id: t.replication_k for t in batch.tasks}
    out = []
    for var in cb.variables:
        if var.kind == "free_text":
            continue
        rows: list[list[Any]] = []
        for task_id in sorted(grouped):
            k = per_task_k.get(task_id)
            if k is None or k < 2:
                continue
            rs = [r for r in grouped[task_id] if not r.no_coverage and var.key in r.answers]
            if len(rs) != k:
                continue
            rows.append([_answer_value(r.answers[var.key]) for r in rs])
        if not rows:
            continue
        n = len(rows[0])
        pct = _pairwise_agreement(rows)
        kappa_value = None
        degenerate = False
        marginals = None
        mad = None
        if var.kind == "single_choice":
            m = build_rating_matrix(responses, cb, var.key, n)
            assert m is not None
            result = fleiss_kappa(m)
            kappa_value, degenerate = result.value, result.degenerate
            marginals = m.category_marginals()
        elif var.kind == "count":
            diffs = []
            for values in rows:
                n_v = len(values)
                diffs.extend(abs(values[i] - values[j])
                             for i in range(n_v) for j in range(i + 1, n_v))
            mad = sum(diffs) / len(diffs)
        out.append(VariableAgreement(
            variable_key=var.key, kind=var.kind, n_subjects=len(rows), n_raters=n,
            percent_agreement=pct, fleiss_kappa=kappa_value, kappa_degenerate=degenerate,
            category_marginals=marginals, mean_abs_diff=mad,
        ))
    return AgreementReport(batch_id=batch.batch_id, codebook_version=cb.version,
                           variables=tuple(out))


def render_agreement_text(report: AgreementReport) -> str:
    lines = [
        f"batch {report.batch_id}  codebook v{report.codebook_version}",
        "",
        f"{'variable':<24}{'kind':<14}{'N':>5}{'n':>4}{'pct_agree':>11}{'kappa':>9}",
    ]
    for v in report.variables:
        kappa = "-"
        if v.fleiss_kappa is not None:
            kappa = f"{v.fleiss_kappa:.4f}" + ("*" if v.kappa_degenerate else "")
        lines.append(
            f"{v.variable_key:<24}{v.kind:<14}{v.n_subjects:>5}{v.n_raters:>4}"
            f"{v.percent_agreement:>11.4f}{kappa:>9}"
        )
    if any(v.kappa_degenerate for v in report.variables):
        lines.append("")
        lines.append("* degenerate: all ratings in a single category")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# GeoJSON export (canonical byte form: re-export of a parse is identical)


def _feature_str(point_id: str, lon: float, lat: float, variable: str, value: Any) -> str:
    props = json.dumps({"point_id": point_id, "variable": variable, "value": value},
                       ensure_ascii=False, separators=(",", ":"))
    return ('{"type":"Feature","geometry":{"type":"Point","coordinates":'
            f'[{lon:.6f},{lat:.6f}]}},"properties":{props}}}')


def export_geojson(points: Sequence[SamplePoint], values: Mapping[str, Any],
                   variable_key: str) -> bytes:
    """FeatureCollection of collected points carrying one aggregated value each."""
    by_id = {p.point_id: p for p in points}
    unknown = sorted(set(values) - set(by_id))
    if unknown:
        raise AnalysisError(f"values reference unknown point(s) {unknown}")
    features = [
        _feature_str(pid, by_id[pid].location.lon, by_id[pid].location.lat,
                     variable_key, values[pid])
        for pid in sorted(values)
    ]
    doc = '{"type":"FeatureCollection","features":[' + ",".join(features) + "]}\n"
    return doc.encode("utf-8")


def reexport_geojson(data: bytes) -> bytes:
    """Parse an exported document and write it back in canonical form."""
    obj = json.loads(data)
    if obj.get("type") != "FeatureCollection":
        raise AnalysisError("not a FeatureCollection")
    features = []
    for feat in obj.get("features", []):
        lon, lat = feat["geometry"]["coordinates"]
        props = feat["properties"]
        features.append(_feature_str(props["point_id"], lon, lat,
                                     props["variable"], props["value"]))
    doc = '{"type":"FeatureCollection","features":[' + ",".join(features) + "]}\n"
    return doc.encode("utf-8")
