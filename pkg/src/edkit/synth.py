"""Synthetic corpus generators for desk-scale experiments and tests."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, EventMention, build_corpus

FILLERS = (
    "the", "a", "they", "we", "people", "yesterday", "quietly", "again",
    "reportedly", "near", "city", "officials", "group", "after", "before",
    "large", "small", "new", "old", "today",
)

KEYWORDS = (
    "attacked", "married", "resigned", "elected", "convicted", "merged",
    "arrested", "injured", "transported", "fined", "appealed", "born",
)


def make_separable_corpus(n_types: int = 8, per_type: int = 32, seed: int = 0,
                          min_len: int = 5, max_len: int = 11) -> Corpus:
    """Keyword-triggered corpus: each type has one unique trigger word,
    fillers are shared, so type and trigger are perfectly recoverable."""
    if n_types > len(KEYWORDS):
        raise ValueError(f"at most {len(KEYWORDS)} types supported")
    rng = np.random.default_rng(seed)
    mentions = []
    for t in range(n_types):
        keyword = KEYWORDS[t]
        label = f"Type.{keyword.capitalize()}"
        for i in range(per_type):
            length = int(rng.integers(min_len, max_len))
            words = [FILLERS[j] for j in rng.integers(0, len(FILLERS), length)]
            pos = int(rng.integers(0, length))
            words[pos] = keyword
            mentions.append(EventMention(
                id=f"{label}#{i}", words=tuple(words),
                trigger_start=pos, trigger_end=pos + 1,
                trigger_text=keyword, label=label))
    return build_corpus(mentions, source=f"synthetic-separable(seed={seed})")


def make_shortcut_corpus(seed: int = 0, per_type: int = 24,
                         shared_fraction: float = 0.5) -> Corpus:
    """Corpus with confusing triggers: some trigger words are shared
    across two types, with a skewed majority type, so a model that
    memorizes trigger->label shortcuts fails exactly on the shared
    (confusing) mentions of the minority type."""
    rng = np.random.default_rng(seed)
    pairs = [("attacked", "Type.Attack", "Type.Demonstrate"),
             ("struck", "Type.Strike", "Type.Transport"),
             ("charged", "Type.Charge", "Type.Fine")]
    unique = {"Type.Attack": "bombed", "Type.Demonstrate": "protested",
              "Type.Strike": "walkout", "Type.Transport": "shipped",
              "Type.Charge": "indicted", "Type.Fine": "penalized"}
    mentions = []
    counter = 0

    def add(label: str, trigger: str):
        nonlocal counter
        length = int(rng.integers(5, 10))
        words = [FILLERS[j] for j in rng.integers(0, len(FILLERS), length)]
        pos = int(rng.integers(0, length))
        words[pos] = trigger
        mentions.append(EventMention(
            id=f"m{counter}", words=tuple(words), trigger_start=pos,
            trigger_end=pos + 1, trigger_text=trigger, label=label))
        counter += 1

    n_shared = int(per_type * shared_fraction)
    for trig, major, minor in pairs:
        for _ in range(per_type):
            add(major, trig)  # shared trigger, dominant type
        for _ in range(per_type - n_shared):
            add(major, unique[major])
        for _ in range(n_shared):
            add(minor, trig)  # confusing: same trigger, minority type
        for _ in range(per_type):
            add(minor, unique[minor])
    return build_corpus(mentions, source=f"synthetic-shortcut(seed={seed})")
