"""Inference with predicted triggers and the metric/debias harness.

Everything here is generic over a Predictor (anything with a
``predict(mentions) -> [Prediction]`` method), so the harness can be
exercised against a trained checkpoint or any rule-based stand-in.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import torch

from .corpus import Corpus, EventMention, LabelSpace
from .pipeline import PromptPipeline
from .sampler import (FewShotSplit, SplitError, sample_cos, sample_ius,
                      sample_tus, build_test_pool)

DEFAULT_LENGTH_BUCKETS = ((10, 20), (20, 30), (30, 40), (40, 50), (50, 60))


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class Prediction:
    mention_id: str
    predicted_trigger_word: str
    predicted_trigger_index: int
    predicted_label: str
    label_distribution: tuple[float, ...] = ()


class Predictor(Protocol):
    def predict(self, mentions: Sequence[EventMention]) -> list[Prediction]:
        ...


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    trigger_accuracy: float
    n: int
    support: dict[str, int] = field(hash=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "trigger_accuracy": self.trigger_accuracy,
            "support": self.support,
        }


class PipelinePredictor:
    """Two-step inference over a frozen pipeline, chunked at batch_eval."""

    def __init__(self, pipeline: PromptPipeline, batch_eval: int = 128):
        self.pipeline = pipeline
        self.batch_eval = batch_eval

    def predict(self, mentions: Sequence[EventMention]) -> list[Prediction]:
        self.pipeline.eval()
        out: list[Prediction] = []
        for start in range(0, len(mentions), self.batch_eval):
            for m in mentions[start : start + self.batch_eval]:
                with torch.no_grad():
                    tp, ep = self.pipeline.predict_one(m)
                out.append(Prediction(
                    mention_id=m.id,
                    predicted_trigger_word=tp.predicted_word,
                    predicted_trigger_index=tp.predicted_index,
                    predicted_label=ep.predicted_label,
                    label_distribution=tuple(float(x) for x in ep.distribution),
                ))
        return out


def compute_metrics(preds: Sequence[Prediction], golds: Sequence[EventMention],
                    labels: LabelSpace) -> EvalReport:
    """Accuracy, support-weighted P/R/F1 (0/0 := 0), and trigger accuracy.

    Trigger correctness counts a predicted word matching any word of the
    gold span (case-folded); labels with zero gold support carry zero
    weight.
    """
    if not golds:
        raise EvalError("empty evaluation set")
    by_id = {p.mention_id: p for p in preds}
    if set(by_id) != {m.id for m in golds}:
        raise EvalError("prediction ids do not align with gold ids")

    support: dict[str, int] = defaultdict(int)
    tp: dict[str, int] = defaultdict(int)
    pred_count: dict[str, int] = defaultdict(int)
    correct = 0
    trig_correct = 0
    for m in golds:
        p = by_id[m.id]
        support[m.label] += 1
        pred_count[p.predicted_label] += 1
        if p.predicted_label == m.label:
            tp[m.label] += 1
            correct += 1
        span = {w.casefold() for w in m.span_words}
        if p.predicted_trigger_word.casefold() in span:
            trig_correct += 1

    total = len(golds)
    w_p = w_r = w_f = 0.0
    for lab, sup in support.items():
        prec = tp[lab] / pred_count[lab] if pred_count[lab] else 0.0
        rec = tp[lab] / sup
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        w_p += sup * prec
        w_r += sup * rec
        w_f += sup * f1
    return EvalReport(
        accuracy=correct / total,
        weighted_precision=w_p / total,
        weighted_recall=w_r / total,
        weighted_f1=w_f / total,
        trigger_accuracy=trig_correct / total,
        n=total,
        support=dict(support),
    )


def evaluate(predictor: Predictor, mentions: Sequence[EventMention],
             labels: LabelSpace) -> EvalReport:
    return compute_metrics(predictor.predict(mentions), mentions, labels)


def length_bucket_eval(predictor: Predictor, pool: Sequence[EventMention],
                       labels: LabelSpace,
                       intervals: Sequence[tuple[int, int]] = DEFAULT_LENGTH_BUCKETS,
                       ) -> dict[str, EvalReport]:
    """Per-bucket reports over half-open (lo, hi] word-count intervals;
    empty buckets are absent from the result."""
    for (lo, hi), (lo2, _hi2) in zip(intervals, list(intervals)[1:]):
        if lo2 < hi:
            raise EvalError("length intervals must be disjoint")
    out: dict[str, EvalReport] = {}
    for lo, hi in intervals:
        bucket = [m for m in pool if lo < m.length <= hi]
        if bucket:
            out[f"({lo},{hi}]"] = evaluate(predictor, bucket, labels)
    return out


def debias_eval(predictor: Predictor, corpus: Corpus, split: FewShotSplit,
                K: int, seed: int) -> dict[str, EvalReport | dict]:
    """One report per method over Full-Test / IUS / TUS / COS.

    Sampler failures for one method are recorded in its slot without
    aborting the others.
    """
    pool = build_test_pool(corpus, split)
    all_mentions = [m for ms in pool.values() for m in ms]
    by_id = corpus.by_id()
    out: dict[str, EvalReport | dict] = {}
    out["Full-Test"] = evaluate(predictor, all_mentions, split.kept_labels)
    samplers = {
        "IUS": lambda: sample_ius(pool, K, seed),
        "TUS": lambda: sample_tus(pool, K, seed),
        "COS": lambda: sample_cos(pool, K, seed, corpus),
    }
    for method, draw in samplers.items():
        try:
            subset = draw()
        except SplitError as exc:
            out[method] = {"unavailable": str(exc)}
            continue
        mentions = [by_id[i] for i in subset.ids]
        report = evaluate(predictor, mentions, split.kept_labels)
        if subset.skipped_labels:
            out[method + "/skipped_labels"] = {"labels": list(subset.skipped_labels)}
        out[method] = report
    return out
