"""Masked-LM backend contract.

The pipeline only needs two things from an encoder: per-token hidden
vectors and the vocabulary logits at the mask position.  A small
trainable toy backend (token embeddings, one position-mixing layer, a
tied output projection) covers every desk-scale test without
accelerators; a lazily imported pretrained adapter plugs in behind the
same EncoderSpec for real runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

PAD, UNK, CLS_TOK, SEP_TOK, MASK_TOK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS_TOK, SEP_TOK, MASK_TOK)


class EncoderError(Exception):
    pass


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIALS:
            raise EncoderError(f"vocab must start with the specials {SPECIALS}")

    @property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def __len__(self) -> int:
        return len(self.tokens)

    pad_id, unk_id, cls_id, sep_id, mask_id = 0, 1, 2, 3, 4


def build_vocab(words: Sequence[str]) -> Vocab:
    """Vocabulary over lowercased surface tokens, specials first."""
    seen = []
    known = set(SPECIALS)
    for w in words:
        t = w.lower()
        if t not in known:
            known.add(t)
            seen.append(t)
    return Vocab(tokens=SPECIALS + tuple(sorted(seen)))


class WhitespaceSegmenter:
    """Identity segmentation: one lowercased token per word, with
    trailing sentence punctuation split off."""

    _PUNCT = ".,;:!?"

    def segment(self, word: str) -> list[str]:
        w = word.lower()
        out: list[str] = []
        while w and w[-1] in self._PUNCT:
            out.insert(0, w[-1])
            w = w[:-1]
        if w:
            out.insert(0, w)
        return out


@dataclass(frozen=True)
class EncoderSpec:
    kind: str  # toy | pretrained
    identifier: str
    max_tokens: int
    d: int
    vocab: Vocab | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "identifier": self.identifier,
                "max_tokens": self.max_tokens, "d": self.d, "seed": self.seed,
                "vocab": list(self.vocab.tokens) if self.vocab else None}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        vocab = Vocab(tuple(d["vocab"])) if d.get("vocab") else None
        return cls(kind=d["kind"], identifier=d["identifier"],
                   max_tokens=d["max_tokens"], d=d["d"],
                   seed=d.get("seed", 0), vocab=vocab)


@dataclass
class EncoderOutput:
    hidden: torch.Tensor  # (tokens, d)
    mask_vocab_logits: torch.Tensor  # (vocab,)

    @property
    def d(self) -> int:
        return self.hidden.shape[1]


def _sinusoid(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    i = torch.arange(d, dtype=torch.float64).unsqueeze(0)
    angle = pos / torch.pow(10000.0, (2 * (i // 2)) / d)
    enc = torch.where(i % 2 == 0, torch.sin(angle), torch.cos(angle))
    return enc.to(torch.float32)


class ToyEncoder(nn.Module):
    """Token embedding table + one single-head self-attention mixing
    layer, output logits tied to the embedding table."""

    def __init__(self, vocab_size: int, d: int, seed: int = 0):
        super().__init__()
        if d < 2:
            raise EncoderError("d must be >= 2")
        gen = torch.Generator().manual_seed(seed)
        scale = 1.0 / math.sqrt(d)
        self.embedding = nn.Parameter(torch.randn(vocab_size, d, generator=gen) * scale)
        self.query = nn.Parameter(torch.randn(d, d, generator=gen) * scale)
        self.mix_weight = nn.Parameter(torch.randn(2 * d, d, generator=gen) * scale)
        self.mix_bias = nn.Parameter(torch.zeros(d))
        self.d = d
        self.vocab_size = vocab_size

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        """(T,) int64 -> (T, d) hidden states."""
        e = self.embedding[token_ids] + _sinusoid(len(token_ids), self.d) * 0.1
        scores = (e @ self.query) @ e.T / math.sqrt(self.d)
        mixed = torch.softmax(scores, dim=-1) @ e
        return torch.tanh(torch.cat([e, mixed], dim=-1) @ self.mix_weight + self.mix_bias)

    def vocab_logits(self, hidden_at_mask: torch.Tensor) -> torch.Tensor:
        return hidden_at_mask @ self.embedding.T


def toy_encoder(seed: int, d: int, vocab: Vocab,
                max_tokens: int = 512) -> tuple[EncoderSpec, ToyEncoder]:
    spec = EncoderSpec(kind="toy", identifier=f"toy-d{d}-s{seed}",
                       max_tokens=max_tokens, d=d, vocab=vocab, seed=seed)
    return spec, ToyEncoder(len(vocab), d, seed=seed)


def encode(module: ToyEncoder, token_ids: Sequence[int], mask_position: int,
           spec: EncoderSpec) -> EncoderOutput:
    """Run the backend on one tokenized prompt."""
    n = len(token_ids)
    if n > spec.max_tokens:
        raise EncoderError(f"input of {n} tokens exceeds max_tokens={spec.max_tokens}")
    if not (0 <= mask_position < n):
        raise EncoderError(f"mask position {mask_position} out of range for {n} tokens")
    ids = torch.as_tensor(list(token_ids), dtype=torch.int64)
    hidden = module(ids)
    logits = module.vocab_logits(hidden[mask_position])
    return EncoderOutput(hidden=hidden, mask_vocab_logits=logits)


def save_toy(module: ToyEncoder, spec: EncoderSpec, directory: str | Path) -> None:
    """Flat binary weights plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(module.state_dict(), directory / "weights.pt")
    (directory / "manifest.json").write_text(
        json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_toy(directory: str | Path) -> tuple[EncoderSpec, ToyEncoder]:
    directory = Path(directory)
    spec = EncoderSpec.from_dict(json.loads((directory / "manifest.json").read_text()))
    module = ToyEncoder(len(spec.vocab), spec.d, seed=spec.seed)
    module.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
    return spec, module


def load_pretrained(identifier: str = "bert-base-uncased"):
    """Adapter seam for a pretrained masked LM; imported lazily and never
    exercised by the test suite."""
    try:
        from transformers import AutoModelForMaskedLM, AutoTokenizer  # noqa: PLC0415
    except ImportError as exc:  # pragma: no cover
        raise EncoderError(
            "pretrained backends need the 'transformers' extra installed") from exc
    tokenizer = AutoTokenizer.from_pretrained(identifier)
    model = AutoModelForMaskedLM.from_pretrained(identifier)
    return tokenizer, model
