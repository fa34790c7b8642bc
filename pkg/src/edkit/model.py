"""Core computation: restricted trigger decoding, the prototypical
event head, and the joint objective.

Trigger recognition scores each mention word by the mask-position
vocabulary logit of its first subword and softmaxes over those L
candidates only, so the recognizer can never emit a word outside the
mention.  Event classification softmaxes the negative Euclidean
distances from the event embedding to the per-label prototypes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .encoder import EncoderOutput
from .prompts import TokenizedPrompt

LOG_FLOOR = 1e-12


class ModelError(Exception):
    pass


@dataclass
class TriggerPrediction:
    distribution: torch.Tensor  # (L,) over mention words
    predicted_index: int
    predicted_word: str


@dataclass
class EventPrediction:
    distribution: torch.Tensor  # (N,) over labels
    predicted_index: int
    predicted_label: str


@dataclass
class PrototypeSpace:
    vectors: torch.Tensor  # (N, d)
    seed: int

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def init_prototypes(n: int, d: int, seed: int) -> PrototypeSpace:
    """Gaussian init at scale 1/sqrt(d) so initial distances stay O(1)."""
    if n < 1 or d < 1:
        raise ModelError("n and d must be >= 1")
    gen = torch.Generator().manual_seed(seed)
    vectors = torch.randn(n, d, generator=gen) / math.sqrt(d)
    return PrototypeSpace(vectors=vectors, seed=seed)


def _first_argmax(values: torch.Tensor) -> int:
    """Lowest index on exact ties (torch.argmax leaves ties unspecified)."""
    return int(np.argmax(values.detach().numpy()))


def recognize_trigger(tok: TokenizedPrompt, enc: EncoderOutput,
                      mention_words: tuple[str, ...]) -> TriggerPrediction:
    """Softmax the mask logits restricted to the mention's words."""
    if not tok.mention_first_token_ids:
        raise ModelError("no candidate words")
    ids = torch.as_tensor(list(tok.mention_first_token_ids), dtype=torch.int64)
    scores = enc.mask_vocab_logits[ids]
    dist = torch.softmax(scores, dim=0)
    idx = _first_argmax(dist)
    return TriggerPrediction(distribution=dist, predicted_index=idx,
                             predicted_word=mention_words[idx])


def trigger_loss(pred: TriggerPrediction, gold_index: int) -> torch.Tensor:
    """Cross-entropy against the gold trigger word."""
    if not (0 <= gold_index < len(pred.distribution)):
        raise ModelError("gold index out of range")
    return -torch.log(pred.distribution[gold_index].clamp_min(LOG_FLOOR))


def event_embedding(tok: TokenizedPrompt, enc: EncoderOutput) -> torch.Tensor:
    """The hidden vector at the mask of the event prompt."""
    return enc.hidden[tok.mask_position]


def classify_event(e0: torch.Tensor, protos: PrototypeSpace,
                   labels: tuple[str, ...], squared: bool = False) -> EventPrediction:
    """Softmax over negative prototype distances (max-shifted)."""
    if e0.shape[-1] != protos.d:
        raise ModelError(f"dimension mismatch: e0 has {e0.shape[-1]}, prototypes {protos.d}")
    if len(labels) != protos.n:
        raise ModelError("label count does not match prototype count")
    diff = protos.vectors - e0.unsqueeze(0)
    sq = (diff * diff).sum(dim=1)
    dist = sq if squared else torch.sqrt(sq.clamp_min(1e-30))
    neg = -dist
    dist_sm = torch.softmax(neg - neg.max().detach(), dim=0)
    idx = _first_argmax(dist_sm)
    return EventPrediction(distribution=dist_sm, predicted_index=idx,
                           predicted_label=labels[idx])


def event_loss(pred: EventPrediction, gold_label_index: int) -> torch.Tensor:
    if not (0 <= gold_label_index < len(pred.distribution)):
        raise ModelError("gold label index out of range")
    return -torch.log(pred.distribution[gold_label_index].clamp_min(LOG_FLOOR))


def joint_loss(lt, ly, alpha: float = 1.0, beta: float = 1.0):
    return alpha * lt + beta * ly
