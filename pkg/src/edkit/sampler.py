"""True few-shot split construction and the bias-probing test samplers.

Randomness contract (frozen so splits are reproducible and independently
re-derivable): every draw uses numpy's default generator (PCG64) seeded
with a composite key.

* K-shot split, label i (position in the kept label space):
  ``rng = np.random.default_rng([seed, i])``; a permutation of that
  label's mentions (in corpus order) is drawn, the first K go to train,
  the next K to valid, the rest to test.
* Full-data split, label i: same generator key; the permutation is cut
  at the 8:1:1 boundaries (floor valid and test, remainders to test
  then train).
* Test subsets: ``rng = np.random.default_rng([seed, METHOD_CODE, j])``
  with j the position of the label in sorted order and METHOD_CODE
  1/2/3 for IUS/TUS/COS.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, EventMention, LabelSpace

RNG_NAME = "numpy-default-pcg64"
DEFAULT_SEED = 42

_METHOD_CODES = {"IUS": 1, "TUS": 2, "COS": 3}


class SplitError(Exception):
    pass


@dataclass(frozen=True)
class FewShotSplit:
    K: int
    kept_labels: LabelSpace
    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    rng: str = RNG_NAME

    def to_json(self) -> str:
        return json.dumps({
            "kind": "few_shot_split",
            "rng": self.rng,
            "K": self.K,
            "seed": self.seed,
            "kept_labels": list(self.kept_labels.labels),
            "train": list(self.train),
            "valid": list(self.valid),
            "test": list(self.test),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FewShotSplit":
        doc = json.loads(text)
        return cls(
            K=doc["K"], seed=doc["seed"], rng=doc.get("rng", RNG_NAME),
            kept_labels=LabelSpace(tuple(doc["kept_labels"])),
            train=tuple(doc["train"]), valid=tuple(doc["valid"]),
            test=tuple(doc["test"]),
        )


@dataclass(frozen=True)
class TestSubset:
    method: str  # IUS | TUS | COS
    K: int
    ids: tuple[str, ...]
    seed: int
    skipped_labels: tuple[str, ...] = ()
    shortfall: dict[str, int] = field(hash=False, default_factory=dict)


def _label_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def make_true_fewshot_split(c: Corpus, K: int, seed: int = DEFAULT_SEED) -> FewShotSplit:
    """K-shot train/valid sets per surviving type; the remainder is test.

    A type survives only if its corpus count exceeds 2K (otherwise it
    cannot contribute K to train and K to valid and still appear in test).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    groups = c.by_label()
    kept = [lab for lab in c.labels.labels if len(groups[lab]) > 2 * K]
    if not kept:
        raise SplitError(f"no event type has more than {2 * K} mentions")
    train: list[str] = []
    valid: list[str] = []
    test: list[str] = []
    for i, lab in enumerate(kept):
        ids = [m.id for m in groups[lab]]
        perm = _label_rng(seed, i).permutation(len(ids))
        train.extend(ids[j] for j in perm[:K])
        valid.extend(ids[j] for j in perm[K : 2 * K])
        test.extend(ids[j] for j in perm[2 * K :])
    return FewShotSplit(K=K, kept_labels=LabelSpace(tuple(kept)),
                        train=tuple(train), valid=tuple(valid),
                        test=tuple(test), seed=seed)


def _ratio_cut(n: int) -> tuple[int, int, int]:
    """8:1:1 sizes: floor valid and test, remainders to test then train."""
    train, valid, test = (8 * n) // 10, n // 10, n // 10
    rest = n - train - valid - test
    if rest >= 1:
        test += 1
    if rest == 2:
        train += 1
    return train, valid, test


def make_fulldata_split(c: Corpus, seed: int = DEFAULT_SEED) -> FewShotSplit:
    """Stratified 8:1:1 partition of the whole corpus (K is recorded as 0)."""
    if len(c) < 10:
        raise SplitError("corpus too small for an 8:1:1 split")
    groups = c.by_label()
    train: list[str] = []
    valid: list[str] = []
    test: list[str] = []
    for i, lab in enumerate(c.labels.labels):
        ids = [m.id for m in groups[lab]]
        n_train, n_valid, n_test = _ratio_cut(len(ids))
        perm = _label_rng(seed, i).permutation(len(ids))
        train.extend(ids[j] for j in perm[:n_train])
        valid.extend(ids[j] for j in perm[n_train : n_train + n_valid])
        test.extend(ids[j] for j in perm[n_train + n_valid :])
    if not (train and valid and test):
        raise SplitError("corpus too small: some part of the 8:1:1 split is empty")
    return FewShotSplit(K=0, kept_labels=c.labels, train=tuple(train),
                        valid=tuple(valid), test=tuple(test), seed=seed)


def build_test_pool(c: Corpus, split: FewShotSplit) -> dict[str, list[EventMention]]:
    """The split's test mentions grouped by label."""
    by_id = c.by_id()
    pool: dict[str, list[EventMention]] = defaultdict(list)
    for mid in split.test:
        m = by_id[mid]
        pool[m.label].append(m)
    return dict(pool)


def sample_ius(pool: Mapping[str, Sequence[EventMention]], K: int,
               seed: int = DEFAULT_SEED) -> TestSubset:
    """Instance-uniform sampling: K mentions per event type, uniformly."""
    if K < 1:
        raise ValueError("K must be >= 1")
    short = {lab: len(ms) for lab, ms in pool.items() if len(ms) < K}
    if short:
        raise SplitError(f"labels with fewer than K={K} test mentions: {sorted(short)}")
    ids: list[str] = []
    for j, lab in enumerate(sorted(pool)):
        ms = pool[lab]
        perm = _label_rng(seed, _METHOD_CODES["IUS"], j).permutation(len(ms))
        ids.extend(ms[i].id for i in perm[:K])
    return TestSubset(method="IUS", K=K, ids=tuple(ids), seed=seed)


def _trigger_groups(ms: Sequence[EventMention]) -> dict[str, list[EventMention]]:
    groups: dict[str, list[EventMention]] = defaultdict(list)
    for m in ms:
        groups[m.trigger_text.casefold()].append(m)
    return dict(groups)


def _round_robin(groups: dict[str, list[EventMention]], K: int,
                 rng: np.random.Generator) -> list[str]:
    """Take one mention per trigger group in shuffled order, cycling until
    K are drawn or every group is exhausted; per-group take counts differ
    by at most 1 until a group runs dry."""
    names = sorted(groups)
    order = [names[i] for i in rng.permutation(len(names))]
    shuffled = {}
    for name in order:
        ms = groups[name]
        perm = rng.permutation(len(ms))
        shuffled[name] = [ms[i].id for i in perm]
    taken: list[str] = []
    while len(taken) < K and any(shuffled.values()):
        for name in order:
            if len(taken) >= K:
                break
            if shuffled[name]:
                taken.append(shuffled[name].pop(0))
    return taken


def sample_tus(pool: Mapping[str, Sequence[EventMention]], K: int,
               seed: int = DEFAULT_SEED) -> TestSubset:
    """Trigger-uniform sampling: within each type, K mentions drawn
    round-robin across its distinct trigger-word groups."""
    if K < 1:
        raise ValueError("K must be >= 1")
    short = {lab: len(ms) for lab, ms in pool.items() if len(ms) < K}
    if short:
        raise SplitError(f"labels with fewer than K={K} test mentions: {sorted(short)}")
    ids: list[str] = []
    for j, lab in enumerate(sorted(pool)):
        rng = _label_rng(seed, _METHOD_CODES["TUS"], j)
        ids.extend(_round_robin(_trigger_groups(pool[lab]), K, rng))
    return TestSubset(method="TUS", K=K, ids=tuple(ids), seed=seed)


def confusing_triggers(c: Corpus) -> set[str]:
    """Case-folded trigger strings attested under at least two event types."""
    seen: dict[str, set[str]] = defaultdict(set)
    for m in c.mentions:
        seen[m.trigger_text.casefold()].add(m.label)
    return {t for t, labs in seen.items() if len(labs) >= 2}


def sample_cos(pool: Mapping[str, Sequence[EventMention]], K: int,
               seed: int, corpus: Corpus) -> TestSubset:
    """Confusion sampling: as TUS but restricted to confusing triggers
    (shared across >= 2 types in the full corpus).

    Labels with no confusing-trigger mention are skipped and reported.
    Labels whose confusing pool holds fewer than K mentions contribute
    what they have; the deficit is reported per label.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    shared = confusing_triggers(corpus)
    ids: list[str] = []
    skipped: list[str] = []
    shortfall: dict[str, int] = {}
    for j, lab in enumerate(sorted(pool)):
        groups = {t: ms for t, ms in _trigger_groups(pool[lab]).items() if t in shared}
        if not groups:
            skipped.append(lab)
            continue
        rng = _label_rng(seed, _METHOD_CODES["COS"], j)
        taken = _round_robin(groups, K, rng)
        if len(taken) < K:
            shortfall[lab] = K - len(taken)
        ids.extend(taken)
    if not ids:
        raise SplitError("no event type has any confusing-trigger mention")
    return TestSubset(method="COS", K=K, ids=tuple(ids), seed=seed,
                      skipped_labels=tuple(skipped), shortfall=shortfall)


def subset_to_json(s: TestSubset) -> str:
    return json.dumps({
        "kind": "test_subset",
        "method": s.method,
        "rng": RNG_NAME,
        "K": s.K,
        "seed": s.seed,
        "ids": list(s.ids),
        "skipped_labels": list(s.skipped_labels),
        "shortfall": s.shortfall,
    }, indent=2)
