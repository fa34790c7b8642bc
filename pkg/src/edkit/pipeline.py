"""The two-step prompt pipeline as a single trainable module.

One encoder parameter set serves both subprompts; the prototype matrix
is a separate parameter group.  The handoff counter records every time a
predicted trigger (rather than the gold one) is fed to the event
classifier, which must never happen in training mode (teacher forcing).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .corpus import EventMention, LabelSpace
from .encoder import (MASK_TOK, SPECIALS, EncoderSpec, ToyEncoder, Vocab,
                      WhitespaceSegmenter, encode)
from .model import (EventPrediction, PrototypeSpace, TriggerPrediction,
                    classify_event, event_embedding, event_loss,
                    init_prototypes, joint_loss, recognize_trigger,
                    trigger_loss)
from .prompts import (PromptConfig, TokenizedPrompt, assemble_event_prompt,
                      assemble_trigger_prompt, map_words_to_tokens)


@dataclass
class AblationFlags:
    no_trigger_recognizer: bool = False
    no_event_classifier_prompt: bool = False
    no_ontology: bool = False

    def to_dict(self) -> dict:
        return {"no_trigger_recognizer": self.no_trigger_recognizer,
                "no_event_classifier_prompt": self.no_event_classifier_prompt,
                "no_ontology": self.no_ontology}

    @classmethod
    def from_dict(cls, d: dict) -> "AblationFlags":
        return cls(**d)


def pipeline_vocab(corpus, prompt_cfg: PromptConfig | None = None):
    """Vocabulary covering the corpus words plus every static prompt
    token (templates, ontology texts, trigger-clause scaffolding)."""
    cfg = prompt_cfg or PromptConfig()
    seg = WhitespaceSegmenter()
    static = " ".join([cfg.trigger_template, cfg.event_template,
                       cfg.ontology_trigger, cfg.ontology_event,
                       "Trigger word is x."])
    tokens: list[str] = []
    seen = set()
    words = [w.replace(MASK_TOK, "") for w in static.split()]
    words += [w for m in corpus.mentions for w in m.words]
    for w in words:
        for t in seg.segment(w):
            if t not in seen:
                seen.add(t)
                tokens.append(t)
    return Vocab(tokens=SPECIALS + tuple(sorted(tokens)))


class PromptPipeline(nn.Module):
    def __init__(self, spec: EncoderSpec, encoder: ToyEncoder,
                 labels: LabelSpace, prompt_cfg: PromptConfig,
                 proto_seed: int = 0, distance: str = "euclidean",
                 ablations: AblationFlags | None = None):
        super().__init__()
        self.spec = spec
        self.encoder = encoder
        self.labels = labels
        self.ablations = ablations or AblationFlags()
        if self.ablations.no_ontology:
            prompt_cfg = prompt_cfg.without_ontology()
        self.prompt_cfg = prompt_cfg
        self.distance = distance
        self.segmenter = WhitespaceSegmenter()
        self.prototypes = nn.Parameter(
            init_prototypes(len(labels), spec.d, proto_seed).vectors.clone())
        self.proto_seed = proto_seed
        self.handoff_count = 0
        self._f1_cache: dict[str, TokenizedPrompt] = {}
        self._raw_cache: dict[str, TokenizedPrompt] = {}

    @property
    def proto_space(self) -> PrototypeSpace:
        return PrototypeSpace(vectors=self.prototypes, seed=self.proto_seed)

    # -- tokenization --

    def _tokenize(self, instance) -> TokenizedPrompt:
        return map_words_to_tokens(instance, self.segmenter, self.spec.vocab,
                                   max_tokens=self.spec.max_tokens)

    def _raw_mention_tokens(self, m: EventMention) -> TokenizedPrompt:
        """[CLS] mention [SEP] with the query position at [CLS]; used by
        the ablated paths that model the raw mention directly."""
        if m.id in self._raw_cache:
            return self._raw_cache[m.id]
        vocab = self.spec.vocab
        ids = [vocab.cls_id]
        spans: dict[int, tuple[int, int]] = {}
        first_ids: list[int] = []
        for i, w in enumerate(m.words):
            toks = self.segmenter.segment(w)
            tok_ids = [vocab.id_of(t) for t in toks]
            spans[i] = (len(ids), len(ids) + len(tok_ids))
            ids.extend(tok_ids)
            first_ids.append(tok_ids[0] if tok_ids else vocab.unk_id)
        ids.append(vocab.sep_id)
        tok = TokenizedPrompt(token_ids=tuple(ids), mask_position=0,
                              mention_token_spans=spans,
                              mention_first_token_ids=tuple(first_ids))
        self._raw_cache[m.id] = tok
        return tok

    # -- forward passes --

    def forward_trigger(self, m: EventMention) -> TriggerPrediction:
        if self.ablations.no_trigger_recognizer:
            tok = self._raw_mention_tokens(m)
        elif m.id in self._f1_cache:
            tok = self._f1_cache[m.id]
        else:
            tok = self._tokenize(assemble_trigger_prompt(m, self.prompt_cfg))
            self._f1_cache[m.id] = tok
        enc = encode(self.encoder, tok.token_ids, tok.mask_position, self.spec)
        return recognize_trigger(tok, enc, m.words)

    def forward_event(self, m: EventMention, trigger_word: str,
                      trigger_is_predicted: bool) -> tuple[EventPrediction, torch.Tensor]:
        if trigger_is_predicted:
            self.handoff_count += 1
            if self.training:
                raise RuntimeError(
                    "predicted trigger fed to the classifier in training mode")
        if self.ablations.no_event_classifier_prompt:
            tok = self._raw_mention_tokens(m)
        elif self.ablations.no_trigger_recognizer:
            # no trigger clause available: event prompt from the mention only
            tok = self._strip_trigger_clause(m)
        else:
            tok = self._tokenize(assemble_event_prompt(m, trigger_word, self.prompt_cfg))
        enc = encode(self.encoder, tok.token_ids, tok.mask_position, self.spec)
        e0 = event_embedding(tok, enc)
        pred = classify_event(e0, self.proto_space, self.labels.labels,
                              squared=(self.distance == "squared"))
        return pred, e0

    def _strip_trigger_clause(self, m: EventMention) -> TokenizedPrompt:
        """Event prompt without the T segment (trigger-recognizer ablation)."""
        order = "+".join(k for k in self.prompt_cfg.event_order.split("+") if k != "T")
        cfg = self.prompt_cfg
        segments = {"M": " ".join(m.words)}
        if cfg.use_ontology:
            segments["O"] = cfg.ontology_event
        from .prompts import _assemble  # noqa: PLC0415
        inst = _assemble(cfg.event_template, segments, order, cfg, len(m.words))
        return self._tokenize(inst)

    def step_losses(self, m: EventMention, gold_label_index: int,
                    alpha: float = 1.0, beta: float = 1.0):
        """One teacher-forced training step; returns (L, Lt, Ly)."""
        if self.ablations.no_trigger_recognizer:
            zero = torch.zeros(())
            pred, _ = self.forward_event(m, m.gold_trigger_word, trigger_is_predicted=False)
            ly = event_loss(pred, gold_label_index)
            return joint_loss(zero, ly, 0.0, beta), zero, ly
        tp = self.forward_trigger(m)
        lt = trigger_loss(tp, m.trigger_start)
        ep, _ = self.forward_event(m, m.gold_trigger_word, trigger_is_predicted=False)
        ly = event_loss(ep, gold_label_index)
        return joint_loss(lt, ly, alpha, beta), lt, ly

    def predict_one(self, m: EventMention) -> tuple[TriggerPrediction, EventPrediction]:
        """Two-step inference: the predicted trigger feeds the classifier."""
        tp = self.forward_trigger(m)
        ep, _ = self.forward_event(m, tp.predicted_word, trigger_is_predicted=True)
        return tp, ep
