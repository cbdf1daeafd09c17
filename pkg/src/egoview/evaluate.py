"""Exact-match QA evaluation with answer normalization, plus report assembly.

Normalization: Unicode NFKC, lowercase, trim, collapse internal whitespace,
then strip trailing '.', '?' and '!' characters (repeatedly, so the function
is idempotent).  Articles ("a", "an", "the") are preserved; every report
flags that choice so scores stay comparable.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Mapping, Sequence

from ._util import percent
from .corpus import _iter_jsonl, _require
from .errors import DuplicateId, DuplicatePrediction, MissingGold, SchemaError
from .solvability import BUCKETS, RequirementHistogram, ViewRequirement, WitnessConfig

NORMALIZATION_VERSION = "nfkc-lower-ws-trailpunct-v1"
ARTICLES_POLICY = "preserved"

_TRAILING_PUNCT = ".?!"


@dataclass(frozen=True)
class Prediction:
    question_id: str
    prediction: str


@dataclass(frozen=True)
class GoldAnswer:
    """A gold answer with an optional minimum-view count for bucketing."""

    question_id: str
    answer: str
    min_views: int | None = None

    @property
    def bucket(self) -> str:
        if self.min_views is None:
            return "unbucketed"
        return ViewRequirement(self.min_views, "exact").bucket


@dataclass
class EvalReport:
    """Overall and per-view-count exact-match percentages."""

    overall_em: float
    per_bucket_em: dict[str, float]
    bucket_counts: dict[str, int]
    total: int
    missing_predictions: int

    def to_dict(self) -> dict:
        return {
            "record": "eval_report",
            "overall_em": self.overall_em,
            "per_bucket_em": self.per_bucket_em,
            "bucket_counts": self.bucket_counts,
            "total": self.total,
            "missing_predictions": self.missing_predictions,
            "normalization": NORMALIZATION_VERSION,
            "articles": ARTICLES_POLICY,
        }


def normalize_answer(text: str) -> str:
    """Canonical answer form; idempotent by construction."""
    t = unicodedata.normalize("NFKC", text).lower().strip()
    t = " ".join(t.split())
    while t and t[-1] in _TRAILING_PUNCT:
        t = t[:-1].rstrip()
    return t


def em_score(
    predictions: Sequence[Prediction],
    gold: Sequence[GoldAnswer],
) -> EvalReport:
    """Exact match after normalization, aggregated overall and per bucket.

    Every prediction must reference a known gold question id and ids must be
    unique; gold items with no prediction score 0 and are counted in
    missing_predictions.  Percentages are rounded half-up to one decimal.
    """
    gold_by_id: dict[str, GoldAnswer] = {}
    for item in gold:
        if item.question_id in gold_by_id:
            raise DuplicateId(f"duplicate gold question id {item.question_id!r}")
        gold_by_id[item.question_id] = item

    pred_by_id: dict[str, str] = {}
    for pred in predictions:
        if pred.question_id not in gold_by_id:
            raise MissingGold(f"prediction for unknown question id {pred.question_id!r}")
        if pred.question_id in pred_by_id:
            raise DuplicatePrediction(f"duplicate prediction for {pred.question_id!r}")
        pred_by_id[pred.question_id] = pred.prediction

    hits: dict[str, int] = {}
    counts: dict[str, int] = {}
    overall_hits = 0
    missing = 0
    for item in gold:
        bucket = item.bucket
        counts[bucket] = counts.get(bucket, 0) + 1
        if item.question_id in pred_by_id:
            em = int(
                normalize_answer(pred_by_id[item.question_id])
                == normalize_answer(item.answer)
            )
        else:
            em = 0
            missing += 1
        hits[bucket] = hits.get(bucket, 0) + em
        overall_hits += em

    bucket_order = [b for b in (*BUCKETS[:4], "unbucketed") if b in counts]
    return EvalReport(
        overall_em=percent(overall_hits, len(gold)),
        per_bucket_em={b: percent(hits[b], counts[b]) for b in bucket_order},
        bucket_counts={b: counts[b] for b in bucket_order},
        total=len(gold),
        missing_predictions=missing,
    )


def solvability_report(hist: RequirementHistogram, cfg: WitnessConfig) -> dict:
    """Structured view-requirement report: counts, percentages, solver mix, config."""
    return {
        "record": "solvability_report",
        "total": hist.total,
        "counts": dict(hist.counts),
        "percentages": hist.percentages(),
        "solver_mix": dict(hist.solver_counts),
        "stride": hist.stride,
        "config": {
            "iosa_threshold": cfg.iosa_threshold,
            "min_area_ratio": cfg.min_area_ratio,
        },
        "total_zero": hist.total == 0,
    }


def format_solvability_report(report: Mapping) -> str:
    """Human-readable table for terminal output."""
    lines = [
        f"instructions: {report['total']}"
        + ("  (empty input)" if report.get("total_zero") else ""),
        "views needed   count   share",
    ]
    for bucket in BUCKETS:
        lines.append(
            f"{bucket:>11}   {report['counts'][bucket]:>5}   {report['percentages'][bucket]:>5.1f}%"
        )
    mix = report["solver_mix"]
    lines.append(f"solved exactly: {mix.get('exact', 0)}, greedily: {mix.get('greedy', 0)}")
    lines.append(f"view stride: {report['stride']}")
    return "\n".join(lines)


def read_predictions(path) -> list[Prediction]:
    records = []
    seen: set[str] = set()
    for lineno, data in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        question_id = str(_require(data, "question_id", where))
        if question_id in seen:
            raise DuplicatePrediction(f"{where}: duplicate prediction for {question_id!r}")
        seen.add(question_id)
        records.append(
            Prediction(question_id=question_id, prediction=str(_require(data, "prediction", where)))
        )
    return records


def read_gold(path) -> list[GoldAnswer]:
    """Read gold answers; composed-question files work directly as gold."""
    records = []
    for lineno, data in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        min_views = data.get("min_views")
        try:
            records.append(
                GoldAnswer(
                    question_id=str(_require(data, "question_id", where)),
                    answer=str(_require(data, "answer", where)),
                    min_views=None if min_views is None else int(min_views),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(where, str(exc)) from exc
    return records
