"""Joint optimization of encoder parameters and prototypes.

Each step is teacher forced: the trigger prompt is scored against the
gold trigger, and the event prompt is assembled with the gold trigger
word.  Both losses share one backward pass (the joint objective), with
AdamW updating encoder parameters and prototypes at separate rates.
Validation (once per epoch) runs the real two-step inference with
predicted triggers; the checkpoint keeps the best-validation-F1 state.
"""

from __future__ import annotations

import copy
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .corpus import Corpus, LabelSpace
from .encoder import EncoderSpec, ToyEncoder
from .evaluator import EvalReport, PipelinePredictor, evaluate
from .pipeline import AblationFlags, PromptPipeline
from .prompts import PromptConfig
from .sampler import FewShotSplit

CHECKPOINT_VERSION = "edkit-checkpoint-v1"
MIN_DELTA = 1e-6


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_train: int = 32
    batch_eval: int = 128
    lr_encoder: float = 1e-2
    lr_other: float = 1e-1
    alpha: float = 1.0
    beta: float = 1.0
    early_stop_patience: int = 1000
    early_stop_monitor: str = "train"  # train | valid
    seeds: tuple[int, ...] = (42,)
    ablations: AblationFlags = field(default_factory=AblationFlags)
    distance: str = "euclidean"  # euclidean | squared
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.epochs < 1 or self.batch_train < 1 or self.batch_eval < 1:
            raise TrainError("counts must be positive")
        if self.lr_encoder <= 0 or self.lr_other <= 0:
            raise TrainError("learning rates must be positive")
        if self.early_stop_patience < 1:
            raise TrainError("patience must be >= 1")
        if self.early_stop_monitor not in ("train", "valid"):
            raise TrainError("early_stop_monitor must be 'train' or 'valid'")
        if self.distance not in ("euclidean", "squared"):
            raise TrainError("distance must be 'euclidean' or 'squared'")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["ablations"] = self.ablations.to_dict()
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "ablations" in d:
            d["ablations"] = AblationFlags.from_dict(d["ablations"])
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class TrainLog:
    iterations: list[dict] = field(default_factory=list)  # {"iter", "lt", "ly", "loss"}
    valid_metrics: list[dict] = field(default_factory=list)  # per epoch
    stop_reason: str = ""
    wall_clock_s: float = 0.0
    handoffs_in_training: int = 0

    def loss_sequence(self) -> list[float]:
        return [r["loss"] for r in self.iterations]


@dataclass
class Checkpoint:
    pipeline: PromptPipeline
    train_config: TrainConfig
    split_seed: int
    run_seed: int
    best_valid_f1: float

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.pipeline.state_dict(), directory / "weights.pt")
        manifest = {
            "version": CHECKPOINT_VERSION,
            "encoder_spec": self.pipeline.spec.to_dict(),
            "labels": list(self.pipeline.labels.labels),
            "prompt_config": self.pipeline.prompt_cfg.to_dict(),
            "ablations": self.pipeline.ablations.to_dict(),
            "distance": self.pipeline.distance,
            "proto_seed": self.pipeline.proto_seed,
            "train_config": self.train_config.to_dict(),
            "split_seed": self.split_seed,
            "run_seed": self.run_seed,
            "best_valid_f1": self.best_valid_f1,
        }
        (directory / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "Checkpoint":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        spec = EncoderSpec.from_dict(manifest["encoder_spec"])
        encoder = ToyEncoder(len(spec.vocab), spec.d, seed=spec.seed)
        pipeline = PromptPipeline(
            spec, encoder, LabelSpace(tuple(manifest["labels"])),
            PromptConfig.from_dict(manifest["prompt_config"]),
            proto_seed=manifest["proto_seed"],
            distance=manifest["distance"],
            ablations=AblationFlags.from_dict(manifest["ablations"]),
        )
        pipeline.load_state_dict(
            torch.load(directory / "weights.pt", weights_only=True))
        return cls(pipeline=pipeline,
                   train_config=TrainConfig.from_dict(manifest["train_config"]),
                   split_seed=manifest["split_seed"],
                   run_seed=manifest["run_seed"],
                   best_valid_f1=manifest["best_valid_f1"])


def _batches(ids: list[str], batch: int, rng: np.random.Generator) -> list[list[str]]:
    order = [ids[i] for i in rng.permutation(len(ids))]
    return [order[i : i + batch] for i in range(0, len(order), batch)]


def train(split: FewShotSplit, corpus: Corpus, cfg: TrainConfig,
          spec: EncoderSpec, encoder: ToyEncoder,
          prompt_cfg: PromptConfig | None = None,
          seed: int = 42) -> tuple[Checkpoint, TrainLog]:
    """Run the joint training loop over one few-shot split."""
    for lab in split.kept_labels.labels:
        if lab not in corpus.labels:
            raise TrainError(f"split label {lab!r} not in corpus")
    torch.manual_seed(seed)
    pipeline = PromptPipeline(spec, encoder, split.kept_labels,
                              prompt_cfg or PromptConfig(), proto_seed=seed,
                              distance=cfg.distance, ablations=cfg.ablations)
    enc_params = list(pipeline.encoder.parameters())
    opt = torch.optim.AdamW([
        {"params": enc_params, "lr": cfg.lr_encoder},
        {"params": [pipeline.prototypes], "lr": cfg.lr_other},
    ], weight_decay=cfg.weight_decay)

    by_id = corpus.by_id()
    label_index = split.kept_labels.index
    train_mentions = {i: by_id[i] for i in split.train}
    valid_mentions = [by_id[i] for i in split.valid]
    predictor = PipelinePredictor(pipeline, batch_eval=cfg.batch_eval)

    log = TrainLog()
    start = time.monotonic()
    best_monitored = math.inf
    stale = 0
    iteration = 0
    best_f1 = -1.0
    best_state = copy.deepcopy(pipeline.state_dict())
    stop = ""
    handoffs_before = pipeline.handoff_count

    for epoch in range(cfg.epochs):
        pipeline.train()
        rng = np.random.default_rng([seed, 1_000_000 + epoch])
        epoch_iters = 0
        for batch_ids in _batches(list(split.train), cfg.batch_train, rng):
            opt.zero_grad()
            total = torch.zeros(())
            lt_sum = ly_sum = 0.0
            for mid in batch_ids:
                m = train_mentions[mid]
                loss, lt, ly = pipeline.step_losses(
                    m, label_index[m.label], cfg.alpha, cfg.beta)
                total = total + loss
                lt_sum += float(lt.detach())
                ly_sum += float(ly.detach())
            total = total / len(batch_ids)
            if not torch.isfinite(total):
                stop = "divergence"
                break
            total.backward()
            opt.step()
            iteration += 1
            epoch_iters += 1
            batch_loss = float(total.detach())
            log.iterations.append({
                "iter": iteration, "epoch": epoch,
                "lt": lt_sum / len(batch_ids), "ly": ly_sum / len(batch_ids),
                "loss": batch_loss,
            })
            if cfg.early_stop_monitor == "train":
                if batch_loss < best_monitored - MIN_DELTA:
                    best_monitored = batch_loss
                    stale = 0
                else:
                    stale += 1
                if stale >= cfg.early_stop_patience:
                    stop = "early-stop"
                    break
        if stop:
            break

        report = evaluate(predictor, valid_mentions, split.kept_labels)
        log.valid_metrics.append({"epoch": epoch, **report.to_dict()})
        if report.weighted_f1 > best_f1:
            best_f1 = report.weighted_f1
            best_state = copy.deepcopy(pipeline.state_dict())

        if cfg.early_stop_monitor == "valid":
            valid_loss = _valid_loss(pipeline, valid_mentions, label_index, cfg)
            if valid_loss < best_monitored - MIN_DELTA:
                best_monitored = valid_loss
                stale = 0
            else:
                stale += epoch_iters
            if stale >= cfg.early_stop_patience:
                stop = "early-stop"

        if stop:
            break

    log.stop_reason = stop or "max-epochs"
    log.wall_clock_s = time.monotonic() - start
    # every handoff so far came from validation passes in eval mode;
    # training-mode handoffs are impossible (the pipeline raises) and the
    # log records the invariant explicitly
    expected_eval_handoffs = len(valid_mentions) * len(log.valid_metrics)
    log.handoffs_in_training = (pipeline.handoff_count - handoffs_before
                                - expected_eval_handoffs)

    if best_f1 < 0:  # stopped before the first validation pass
        report = evaluate(predictor, valid_mentions, split.kept_labels)
        best_f1 = report.weighted_f1
        best_state = copy.deepcopy(pipeline.state_dict())
    pipeline.load_state_dict(best_state)
    pipeline.eval()
    return Checkpoint(pipeline=pipeline, train_config=cfg,
                      split_seed=split.seed, run_seed=seed,
                      best_valid_f1=best_f1), log


def _valid_loss(pipeline: PromptPipeline, mentions, label_index, cfg) -> float:
    pipeline.eval()
    total = 0.0
    with torch.no_grad():
        for m in mentions:
            loss, _, _ = pipeline.step_losses(m, label_index[m.label],
                                              cfg.alpha, cfg.beta)
            total += float(loss)
    pipeline.train()
    return total / len(mentions)


@dataclass
class SeedAggregate:
    per_seed: dict[int, EvalReport]
    mean: dict[str, float]
    std: dict[str, float]
    complete: bool


def run_seeds(split: FewShotSplit, corpus: Corpus, cfg: TrainConfig,
              make_encoder, prompt_cfg: PromptConfig | None = None,
              eval_mentions=None) -> SeedAggregate:
    """Train once per seed and aggregate test metrics.

    make_encoder(seed) must return a fresh (EncoderSpec, ToyEncoder)
    pair so seeds share no state.
    """
    if not cfg.seeds:
        raise TrainError("at least one seed required")
    by_id = corpus.by_id()
    if eval_mentions is None:
        eval_mentions = [by_id[i] for i in split.test]
    per_seed: dict[int, EvalReport] = {}
    complete = True
    for s in cfg.seeds:
        try:
            spec, encoder = make_encoder(s)
            ckpt, _ = train(split, corpus, cfg, spec, encoder,
                            prompt_cfg=prompt_cfg, seed=s)
            predictor = PipelinePredictor(ckpt.pipeline, batch_eval=cfg.batch_eval)
            per_seed[s] = evaluate(predictor, eval_mentions, split.kept_labels)
        except (TrainError, RuntimeError):
            complete = False
    metrics = ("accuracy", "weighted_precision", "weighted_recall",
               "weighted_f1", "trigger_accuracy")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    if per_seed:
        for name in metrics:
            vals = [getattr(r, name) for r in per_seed.values()]
            mean[name] = statistics.fmean(vals)
            std[name] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
    return SeedAggregate(per_seed=per_seed, mean=mean, std=std, complete=complete)
