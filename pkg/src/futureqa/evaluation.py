"""Ranking/accuracy metrics, benchmark orchestration, and the
training-set-size sweep."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import TrainConfig
from .forecaster import TimeAwareReps
from .qa import QAModel, _EntityMatrixCache, family_of, predict, train_qa
from .questions import EPQ1, EPQ2, FRQ, YUQ, Question

SCHEMA_VERSION = 1


class LeakageGuardError(RuntimeError):
    """Representations for a question were built from facts at or after
    its timestamp."""


def mrr(ranks: Sequence[int]) -> float:
    """Mean reciprocal rank."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("mrr of an empty rank list")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def hits_at_k(ranks: Sequence[int], k: int) -> float:
    """Fraction of ranks <= k."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("hits@k of an empty rank list")
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(np.mean([1.0 if r <= k else 0.0 for r in ranks]))


def _rank_metrics(ranks: list[int]) -> dict:
    if not ranks:
        return {"n": 0}
    return {
        "n": len(ranks),
        "mrr": mrr(ranks),
        "hits@1": hits_at_k(ranks, 1),
        "hits@3": hits_at_k(ranks, 3),
        "hits@10": hits_at_k(ranks, 10),
    }


@dataclass
class EvalReport:
    schema_version: int = SCHEMA_VERSION
    per_question: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    wall_clock_seconds: float | None = None

    def to_json(self, include_timing: bool = False) -> str:
        payload = {
            "schema_version": self.schema_version,
            "aggregates": self.aggregates,
            "config": self.config,
            "per_question": self.per_question,
        }
        if include_timing and self.wall_clock_seconds is not None:
            payload["wall_clock_seconds"] = self.wall_clock_seconds
        return json.dumps(payload, sort_keys=True, indent=1)

    def save(self, path: str | Path) -> None:
        # Timing is volatile, so it stays out of the serialized artifact;
        # identical runs must produce byte-identical reports.
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "EvalReport":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return EvalReport(payload["schema_version"], payload["per_question"],
                          payload["aggregates"], payload["config"])


def run_benchmark(model: QAModel, reps: TimeAwareReps,
                  questions: Sequence[Question], config: dict | None = None
                  ) -> EvalReport:
    """Score every question, verify the leakage guard, aggregate metrics.

    Entity questions are ranked over all entities; 1-hop and 2-hop get
    separate blocks plus a question-count-weighted overall block.
    """
    started = time.monotonic()
    report = EvalReport(config=dict(config or {}))
    matrices = _EntityMatrixCache(reps)
    ranks: dict[str, list[int]] = {EPQ1: [], EPQ2: []}
    correct: dict[str, list[bool]] = {YUQ: [], FRQ: []}
    fallbacks = 0
    for q in questions:
        guard = reps.window_max_t.get(q.t_q)
        if guard is None:
            raise LeakageGuardError(f"{q.id}: no representations at t={q.t_q}")
        if guard >= q.t_q:
            raise LeakageGuardError(
                f"{q.id}: reps at t={q.t_q} saw facts up to t={guard}")
        pred = predict(q, reps, model, matrices)
        record = {"id": q.id, "qtype": q.qtype, "predicted": pred.answer}
        if q.qtype in (EPQ1, EPQ2):
            ranks[q.qtype].append(pred.rank)
            record["rank"] = pred.rank
        else:
            ok = pred.answer == q.answer
            correct[q.qtype].append(ok)
            record["correct"] = bool(ok)
            if pred.used_fallback:
                fallbacks += 1
                record["used_fallback"] = True
        report.per_question.append(record)

    agg = {
        "epq_1hop": _rank_metrics(ranks[EPQ1]),
        "epq_2hop": _rank_metrics(ranks[EPQ2]),
        "epq_overall": _rank_metrics(ranks[EPQ1] + ranks[EPQ2]),
    }
    for qtype, key in ((YUQ, "yuq"), (FRQ, "frq")):
        if correct[qtype]:
            agg[key] = {"n": len(correct[qtype]),
                        "accuracy": float(np.mean(correct[qtype]))}
        else:
            agg[key] = {"n": 0}
    if fallbacks:
        agg["frq"]["fallback_questions"] = fallbacks
    report.aggregates = agg
    report.wall_clock_seconds = time.monotonic() - started
    return report


def render_table(report: EvalReport) -> str:
    """Human-readable rendering of the aggregate blocks."""
    lines = [f"{'block':<12} {'n':>6} {'mrr':>8} {'hits@1':>8} "
             f"{'hits@3':>8} {'hits@10':>8} {'accuracy':>9}"]
    for key in ("epq_1hop", "epq_2hop", "epq_overall", "yuq", "frq"):
        block = report.aggregates.get(key, {})
        n = block.get("n", 0)

        def cell(name):
            return f"{block[name]:8.4f}" if name in block else f"{'-':>8}"

        acc = f"{block['accuracy']:9.4f}" if "accuracy" in block else f"{'-':>9}"
        lines.append(f"{key:<12} {n:>6} {cell('mrr')} {cell('hits@1')} "
                     f"{cell('hits@3')} {cell('hits@10')} {acc}")
    return "\n".join(lines)


def report_to_csv(report: EvalReport) -> str:
    rows = ["block,metric,value"]
    for key in sorted(report.aggregates):
        for metric in sorted(report.aggregates[key]):
            rows.append(f"{key},{metric},{report.aggregates[key][metric]}")
    return "\n".join(rows) + "\n"


def data_efficiency(questions_by_family: dict[str, list[Question]],
                    test_questions: Sequence[Question], reps: TimeAwareReps,
                    cfg: TrainConfig, fractions: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 1.0),
                    seed: int = 0, token_vocab=None
                    ) -> list[dict]:
    """Retrain on nested subsamples of the training questions and
    evaluate each model on the fixed test set.

    Fraction 1.0 uses the untouched full training set, so that point is
    bit-identical to a standard run under the same config.
    """
    fractions = list(fractions)
    if any(f <= 0.0 or f > 1.0 for f in fractions):
        raise ValueError(f"fractions must lie in (0, 1], got {fractions}")
    if sorted(fractions) != fractions:
        raise ValueError("fractions must be sorted ascending")
    rng = np.random.default_rng(seed)
    orders = {fam: rng.permutation(len(qs))
              for fam, qs in questions_by_family.items()}
    points = []
    for frac in fractions:
        if frac == 1.0:
            subset = questions_by_family
        else:
            subset = {}
            for fam, qs in questions_by_family.items():
                k = max(1, int(np.ceil(frac * len(qs))))
                subset[fam] = [qs[i] for i in sorted(orders[fam][:k])]
        model, _ = train_qa(subset, reps, cfg, token_vocab=token_vocab)
        report = run_benchmark(model, reps, test_questions,
                               config={"fraction": frac})
        points.append({"fraction": frac, "aggregates": report.aggregates})
    return points


def metric_curve(points: list[dict], block: str, metric: str) -> list[float]:
    return [p["aggregates"][block][metric] for p in points]
