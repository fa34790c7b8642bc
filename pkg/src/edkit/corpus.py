"""Data model, ingestion, cleaning, statistics, and trigger-bias profiling.

Corpora are trigger-annotated event mentions stored as JSONL, one record
per line with pre-segmented word arrays:

    {"id": ..., "words": [...], "trigger_start": int, "trigger_end": int,
     "trigger": str, "label": str}

trigger_end is exclusive.  Records whose trigger text disagrees with the
annotated span are dropped at load time (never silently: a drop log with
reasons is kept on the Corpus).
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

FORMAT_VERSION = "edkit-corpus-v1"

REQUIRED_FIELDS = ("id", "words", "trigger_start", "trigger_end", "trigger", "label")


class CorpusError(Exception):
    """Unreadable file or structurally malformed record."""


@dataclass(frozen=True)
class EventMention:
    """One annotated sentence: word sequence, trigger span, event label."""

    id: str
    words: tuple[str, ...]
    trigger_start: int
    trigger_end: int  # exclusive
    trigger_text: str
    label: str

    @property
    def length(self) -> int:
        return len(self.words)

    @property
    def span_words(self) -> tuple[str, ...]:
        return self.words[self.trigger_start : self.trigger_end]

    @property
    def gold_trigger_word(self) -> str:
        """First word of the span; downstream recognizers predict one word."""
        return self.words[self.trigger_start]


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    reasons: tuple[str, ...] = ()


def validate_mention(m: EventMention) -> ValidationReport:
    """Check every EventMention invariant; total function, never raises."""
    reasons = []
    if len(m.words) < 1:
        reasons.append("empty-words")
    if not (0 <= m.trigger_start < m.trigger_end <= len(m.words)):
        reasons.append("span-out-of-range")
    else:
        span = " ".join(m.words[m.trigger_start : m.trigger_end])
        if span.casefold() != m.trigger_text.casefold():
            reasons.append("text-mismatch")
    return ValidationReport(valid=not reasons, reasons=tuple(reasons))


@dataclass(frozen=True)
class LabelSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")

    @property
    def index(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index


@dataclass(frozen=True)
class DroppedRecord:
    id: str
    reasons: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    mentions: tuple[EventMention, ...]
    labels: LabelSpace
    source: str = ""
    format_version: str = FORMAT_VERSION
    dropped: tuple[DroppedRecord, ...] = ()

    def __post_init__(self):
        ids = [m.id for m in self.mentions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate mention ids")
        idx = self.labels.index
        for m in self.mentions:
            if m.label not in idx:
                raise ValueError(f"mention {m.id} label {m.label!r} not in label space")

    def __len__(self) -> int:
        return len(self.mentions)

    def by_id(self) -> dict[str, EventMention]:
        return {m.id: m for m in self.mentions}

    def by_label(self) -> dict[str, list[EventMention]]:
        groups: dict[str, list[EventMention]] = defaultdict(list)
        for m in self.mentions:
            groups[m.label].append(m)
        return dict(groups)


def _mention_from_record(rec: dict) -> EventMention:
    missing = [f for f in REQUIRED_FIELDS if f not in rec]
    if missing:
        raise CorpusError(f"record missing fields {missing}")
    if not isinstance(rec["words"], list) or not all(isinstance(w, str) for w in rec["words"]):
        raise CorpusError("words must be an array of strings")
    return EventMention(
        id=str(rec["id"]),
        words=tuple(rec["words"]),
        trigger_start=int(rec["trigger_start"]),
        trigger_end=int(rec["trigger_end"]),
        trigger_text=str(rec["trigger"]),
        label=str(rec["label"]),
    )


def build_corpus(mentions: Iterable[EventMention], source: str = "",
                 dropped: Iterable[DroppedRecord] = ()) -> Corpus:
    """Assemble a Corpus, deriving the label space from mention order."""
    mentions = tuple(mentions)
    labels = []
    seen = set()
    for m in mentions:
        if m.label not in seen:
            seen.add(m.label)
            labels.append(m.label)
    return Corpus(mentions=mentions, labels=LabelSpace(tuple(labels)),
                  source=source, dropped=tuple(dropped))


def load_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load and clean a JSONL corpus.

    Semantically invalid records (bad span, trigger/span mismatch) are
    dropped and logged; structurally malformed lines raise CorpusError.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported format {format!r}")
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"no such corpus file: {path}")
    kept: list[EventMention] = []
    dropped: list[DroppedRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            m = _mention_from_record(rec)
            report = validate_mention(m)
            if report.valid:
                kept.append(m)
            else:
                dropped.append(DroppedRecord(id=m.id, reasons=report.reasons))
    return build_corpus(kept, source=str(path), dropped=dropped)


def write_corpus(c: Corpus, path: str | Path) -> None:
    """Write JSONL plus a sidecar manifest recording provenance and drops."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for m in c.mentions:
            fh.write(json.dumps({
                "id": m.id,
                "words": list(m.words),
                "trigger_start": m.trigger_start,
                "trigger_end": m.trigger_end,
                "trigger": m.trigger_text,
                "label": m.label,
            }, ensure_ascii=False) + "\n")
    manifest = {
        "format_version": c.format_version,
        "source": c.source,
        "n_mentions": len(c.mentions),
        "n_types": len(c.labels),
        "n_dropped": len(c.dropped),
        "dropped": [{"id": d.id, "reasons": list(d.reasons)} for d in c.dropped],
    }
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class CorpusStats:
    n_types: int
    n_mentions: int
    mean_mentions_per_type: float
    mean_mention_length: float
    mean_trigger_length: float
    per_type_counts: dict[str, int] = field(hash=False, default_factory=dict)


def corpus_stats(c: Corpus) -> CorpusStats:
    if not c.mentions:
        raise CorpusError("empty corpus")
    counts = Counter(m.label for m in c.mentions)
    n = len(c.mentions)
    return CorpusStats(
        n_types=len(counts),
        n_mentions=n,
        mean_mentions_per_type=n / len(counts),
        mean_mention_length=sum(m.length for m in c.mentions) / n,
        mean_trigger_length=sum(m.trigger_end - m.trigger_start for m in c.mentions) / n,
        per_type_counts=dict(counts),
    )


@dataclass(frozen=True)
class BiasProfile:
    """Long-tail co-occurrence of (case-folded) triggers and event types."""

    k: int
    per_type_trigger_hist: dict[str, dict[str, int]] = field(hash=False, default_factory=dict)
    per_trigger_type_hist: dict[str, dict[str, int]] = field(hash=False, default_factory=dict)
    topk_trigger_share: dict[str, float] = field(hash=False, default_factory=dict)
    topk_type_share: dict[str, float] = field(hash=False, default_factory=dict)


def _topk_share(hist: dict[str, int], k: int) -> float:
    counts = sorted(hist.values(), reverse=True)
    return sum(counts[:k]) / sum(counts)


def trigger_bias_profile(c: Corpus, k: int) -> BiasProfile:
    """Per-type trigger histograms and per-trigger type histograms with
    top-k concentration shares."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not c.mentions:
        raise CorpusError("empty corpus")
    by_type: dict[str, Counter] = defaultdict(Counter)
    by_trigger: dict[str, Counter] = defaultdict(Counter)
    for m in c.mentions:
        trig = m.trigger_text.casefold()
        by_type[m.label][trig] += 1
        by_trigger[trig][m.label] += 1
    return BiasProfile(
        k=k,
        per_type_trigger_hist={t: dict(h) for t, h in by_type.items()},
        per_trigger_type_hist={t: dict(h) for t, h in by_trigger.items()},
        topk_trigger_share={t: _topk_share(h, k) for t, h in by_type.items()},
        topk_type_share={t: _topk_share(h, k) for t, h in by_trigger.items()},
    )
