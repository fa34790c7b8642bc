"""Cloze prompt assembly for the two-step pipeline.

Step one asks the masked LM to name the trigger word; step two asks it
to embed the event.  Both prompts are plain marker-bearing strings
("[CLS] ... [SEP] ... [SEP]") whose inner segments -- mention (M),
ontology text (O), and trigger clause (T) -- can be reordered for the
input-sequence experiments.  Assembly is bit-exact: golden fixtures pin
every (order, ontology) combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

from .corpus import EventMention

MASK = "[MASK]"
CLS = "[CLS]"
SEP = "[SEP]"

TRIGGER_TEMPLATE = "Trigger word is [MASK]."
EVENT_TEMPLATE = "This is event about [MASK]."
ONTOLOGY_TRIGGER = ("Trigger word: a word that can trigger an event, "
                    "usually a verb or noun in the sentence.")
ONTOLOGY_EVENT = "Event: which type the sentence or trigger belongs to."

TRIGGER_ORDERS = ("M+O", "O+M")
EVENT_ORDERS = ("M+O+T", "M+T+O", "O+M+T", "O+T+M", "T+M+O", "T+O+M")


class PromptError(Exception):
    pass


@dataclass(frozen=True)
class PromptConfig:
    trigger_template: str = TRIGGER_TEMPLATE
    event_template: str = EVENT_TEMPLATE
    ontology_trigger: str = ONTOLOGY_TRIGGER
    ontology_event: str = ONTOLOGY_EVENT
    trigger_order: str = "M+O"
    event_order: str = "M+O+T"
    use_ontology: bool = True
    inner_separator: str = " [SEP] "

    def __post_init__(self):
        for tpl in (self.trigger_template, self.event_template):
            if tpl.count(MASK) != 1:
                raise PromptError(f"template must contain exactly one {MASK}: {tpl!r}")
        if self.trigger_order not in TRIGGER_ORDERS:
            raise PromptError(f"trigger_order must be one of {TRIGGER_ORDERS}")
        if self.event_order not in EVENT_ORDERS:
            raise PromptError(f"event_order must be one of {EVENT_ORDERS}")

    def without_ontology(self) -> "PromptConfig":
        return replace(self, use_ontology=False)

    def to_dict(self) -> dict:
        return {
            "trigger_template": self.trigger_template,
            "event_template": self.event_template,
            "ontology_trigger": self.ontology_trigger,
            "ontology_event": self.ontology_event,
            "trigger_order": self.trigger_order,
            "event_order": self.event_order,
            "use_ontology": self.use_ontology,
            "inner_separator": self.inner_separator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptConfig":
        return cls(**d)


@dataclass(frozen=True)
class PromptInstance:
    """An assembled cloze input.

    Word positions index the text split on single spaces; mention_word_map
    sends mention word i to its position in that sequence.
    """

    text: str
    mask_word_index: int
    mention_word_map: tuple[int, ...]

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.text.split(" "))

    @property
    def candidate_word_indices(self) -> tuple[int, ...]:
        return self.mention_word_map


def _assemble(template: str, segments: dict[str, str], order: str,
              cfg: PromptConfig, mention_len: int) -> PromptInstance:
    keys = [k for k in order.split("+") if k in segments]
    body = cfg.inner_separator.join(segments[k] for k in keys)
    text = f"{CLS} {template} {SEP} {body} {SEP}"
    words = text.split(" ")
    mask_index = next(i for i, w in enumerate(words) if MASK in w)
    # offset of the mention segment within the word sequence
    offset = len(f"{CLS} {template} {SEP} ".split(" ")) - 1
    for k in keys:
        if k == "M":
            break
        sep_words = [w for w in cfg.inner_separator.split(" ") if w]
        offset += len(segments[k].split(" ")) + len(sep_words)
    word_map = tuple(range(offset, offset + mention_len))
    return PromptInstance(text=text, mask_word_index=mask_index,
                          mention_word_map=word_map)


def assemble_trigger_prompt(m: EventMention, cfg: PromptConfig) -> PromptInstance:
    """Build the trigger-recognition prompt around the mention."""
    segments = {"M": " ".join(m.words)}
    if cfg.use_ontology:
        segments["O"] = cfg.ontology_trigger
    return _assemble(cfg.trigger_template, segments, cfg.trigger_order,
                     cfg, len(m.words))


def assemble_event_prompt(m: EventMention, trigger_word: str,
                          cfg: PromptConfig) -> PromptInstance:
    """Build the event-classification prompt around the mention and the
    trigger clause 'Trigger word is <w>.'."""
    if not trigger_word:
        raise PromptError("trigger_word must be nonempty")
    segments = {"M": " ".join(m.words),
                "T": f"Trigger word is {trigger_word}."}
    if cfg.use_ontology:
        segments["O"] = cfg.ontology_event
    return _assemble(cfg.event_template, segments, cfg.event_order,
                     cfg, len(m.words))


class Segmenter(Protocol):
    """Deterministic subword segmenter matched to the active encoder."""

    def segment(self, word: str) -> list[str]:
        """Split one surface word into subword token strings."""
        ...


@dataclass(frozen=True)
class TokenizedPrompt:
    """Token-level realization of a PromptInstance.

    mention_token_spans holds, per mention word still present after any
    truncation, a contiguous half-open span into token_ids.
    mention_first_token_ids covers all L mention words (truncated or not)
    so restricted decoding can always score every candidate.
    """

    token_ids: tuple[int, ...]
    mask_position: int
    mention_token_spans: dict[int, tuple[int, int]] = field(hash=False, default_factory=dict)
    mention_first_token_ids: tuple[int, ...] = ()
    truncated_mention_words: tuple[int, ...] = ()


def map_words_to_tokens(p: PromptInstance, segmenter: Segmenter, vocab,
                        max_tokens: int | None = None) -> TokenizedPrompt:
    """Tokenize a prompt, keeping the word -> token-span correspondence.

    If the result exceeds max_tokens, mention tail words are dropped
    (template, ontology, and trigger clause are never touched) and the
    dropped indices are reported on the result.
    """
    words = list(p.words)
    mention_positions = set(p.mention_word_map)
    pos_to_mention = {pos: i for i, pos in enumerate(p.mention_word_map)}

    def word_tokens(pos: int, word: str) -> list[int]:
        if word == CLS:
            return [vocab.cls_id]
        if word == SEP:
            return [vocab.sep_id]
        if MASK in word:
            rest = word.replace(MASK, "", 1)
            ids = [vocab.mask_id]
            if rest:
                ids.extend(vocab.id_of(t) for t in segmenter.segment(rest))
            return ids
        return [vocab.id_of(t) for t in segmenter.segment(word)]

    per_word = [word_tokens(i, w) for i, w in enumerate(words)]
    dropped: list[int] = []
    if max_tokens is not None:
        total = sum(len(t) for t in per_word)
        # drop mention words from the tail until the prompt fits
        tail = sorted(mention_positions, reverse=True)
        for pos in tail:
            if total <= max_tokens:
                break
            total -= len(per_word[pos])
            per_word[pos] = []
            dropped.append(pos_to_mention[pos])
        if total > max_tokens:
            raise PromptError(
                f"prompt scaffolding alone exceeds max_tokens={max_tokens}")

    token_ids: list[int] = []
    spans: dict[int, tuple[int, int]] = {}
    mask_position = -1
    for pos, toks in enumerate(per_word):
        start = len(token_ids)
        token_ids.extend(toks)
        if pos == p.mask_word_index and toks:
            mask_position = start
        if pos in pos_to_mention and toks:
            spans[pos_to_mention[pos]] = (start, start + len(toks))
    if mask_position < 0:
        raise PromptError("mask token lost during tokenization")

    first_ids = []
    mention_words = [words[pos] for pos in p.mention_word_map]
    for w in mention_words:
        toks = segmenter.segment(w)
        first_ids.append(vocab.id_of(toks[0]) if toks else vocab.unk_id)

    return TokenizedPrompt(
        token_ids=tuple(token_ids),
        mask_position=mask_position,
        mention_token_spans=spans,
        mention_first_token_ids=tuple(first_ids),
        truncated_mention_words=tuple(sorted(dropped)),
    )
