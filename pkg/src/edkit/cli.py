"""Command-line entry point.

Subcommands: stats, split, train, eval, debias, ablate.  Experiment
configuration lives in one JSON file; run artifacts land in a directory
named by the config hash and seed so ablation grids never overwrite
each other.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from .corpus import CorpusError, corpus_stats, load_corpus, trigger_bias_profile
from .encoder import toy_encoder
from .evaluator import (PipelinePredictor, debias_eval, evaluate,
                        length_bucket_eval)
from .pipeline import AblationFlags, pipeline_vocab
from .prompts import EVENT_ORDERS, TRIGGER_ORDERS, PromptConfig
from .sampler import (DEFAULT_SEED, FewShotSplit, SplitError,
                      make_fulldata_split, make_true_fewshot_split)
from .trainer import Checkpoint, TrainConfig, TrainError, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write_json_atomic(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _report_payload(report) -> dict:
    if isinstance(report, dict):
        return {k: _report_payload(v) for k, v in report.items()}
    if hasattr(report, "to_dict"):
        return report.to_dict()
    return report


def _load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_USAGE) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"invalid config JSON: {exc}", EXIT_USAGE) from exc
    for key in ("corpus", "K"):
        if key not in cfg:
            raise CliError(f"config missing required key {key!r}", EXIT_USAGE)
    return cfg


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def _run_dir(cfg: dict, seed: int) -> Path:
    base = Path(cfg.get("output_dir", "runs"))
    return base / f"{_config_hash(cfg)}-s{seed}"


def _load_corpus_or_die(path: str):
    try:
        return load_corpus(path)
    except CorpusError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc


def _prompt_config(cfg: dict) -> PromptConfig:
    return PromptConfig.from_dict({**PromptConfig().to_dict(),
                                   **cfg.get("prompt", {})})


def _train_one(cfg: dict, corpus, split, seed: int, prompt_cfg: PromptConfig,
               train_cfg: TrainConfig, run_dir: Path):
    enc_cfg = cfg.get("encoder", {})
    if enc_cfg.get("kind", "toy") != "toy":
        raise CliError("only the toy backend is runnable from the CLI; "
                       "pretrained runs go through the library API", EXIT_USAGE)
    vocab = pipeline_vocab(corpus, prompt_cfg)
    spec, encoder = toy_encoder(seed=enc_cfg.get("seed", seed),
                                d=enc_cfg.get("d", 32), vocab=vocab,
                                max_tokens=enc_cfg.get("max_tokens", 512))
    try:
        ckpt, log = train(split, corpus, train_cfg, spec, encoder,
                          prompt_cfg=prompt_cfg, seed=seed)
    except TrainError as exc:
        raise CliError(str(exc), EXIT_RUNTIME) from exc
    if log.stop_reason == "divergence":
        raise CliError("training diverged (non-finite loss)", EXIT_RUNTIME)
    ckpt.save(run_dir / "checkpoint")
    with (run_dir / "trainlog.jsonl").open("w", encoding="utf-8") as fh:
        for rec in log.iterations:
            fh.write(json.dumps(rec) + "\n")
    _write_json_atomic(run_dir / "valid_metrics.json", log.valid_metrics)
    _write_json_atomic(run_dir / "resolved_config.json",
                       {**cfg, "seed": seed, "stop_reason": log.stop_reason,
                        "wall_clock_s": log.wall_clock_s})
    return ckpt


def cmd_stats(args) -> int:
    corpus = _load_corpus_or_die(args.corpus)
    try:
        stats = corpus_stats(corpus)
        profile = trigger_bias_profile(corpus, args.topk)
    except (CorpusError, ValueError) as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    out = Path(args.out)
    _write_json_atomic(out / "stats.json", dataclasses.asdict(stats))
    _write_json_atomic(out / "bias_profile.json", dataclasses.asdict(profile))
    print(f"types={stats.n_types} mentions={stats.n_mentions} "
          f"mean_len={stats.mean_mention_length:.2f} "
          f"mean_trigger_len={stats.mean_trigger_length:.2f} "
          f"dropped={len(corpus.dropped)}")
    return EXIT_OK


def cmd_split(args) -> int:
    corpus = _load_corpus_or_die(args.corpus)
    try:
        if args.full:
            split = make_fulldata_split(corpus, seed=args.seed)
        else:
            if args.K < 1:
                raise CliError("K must be >= 1", EXIT_USAGE)
            split = make_true_fewshot_split(corpus, args.K, seed=args.seed)
    except SplitError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(split.to_json() + "\n", encoding="utf-8")
    print(f"types={len(split.kept_labels)} train={len(split.train)} "
          f"valid={len(split.valid)} test={len(split.test)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    corpus = _load_corpus_or_die(cfg["corpus"])
    prompt_cfg = _prompt_config(cfg)
    train_cfg = TrainConfig.from_dict(cfg.get("train", {}))
    try:
        split = make_true_fewshot_split(corpus, cfg["K"],
                                        seed=cfg.get("seed", DEFAULT_SEED))
    except SplitError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    for seed in train_cfg.seeds:
        run_dir = _run_dir(cfg, seed)
        _train_one(cfg, corpus, split, seed, prompt_cfg, train_cfg, run_dir)
        print(f"run {run_dir}: checkpoint written")
    return EXIT_OK


def _load_checkpoint(path: str) -> Checkpoint:
    try:
        return Checkpoint.load(path)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint: {exc}", EXIT_DATA) from exc


def cmd_eval(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    corpus = _load_corpus_or_die(args.corpus)
    split = FewShotSplit.from_json(Path(args.split).read_text(encoding="utf-8"))
    by_id = corpus.by_id()
    target_ids = getattr(split, args.target)
    mentions = [by_id[i] for i in target_ids]
    predictor = PipelinePredictor(ckpt.pipeline,
                                  batch_eval=ckpt.train_config.batch_eval)
    report = evaluate(predictor, mentions, split.kept_labels)
    payload = report.to_dict()
    if args.buckets:
        buckets = length_bucket_eval(predictor, mentions, split.kept_labels)
        payload["buckets"] = {k: r.to_dict() for k, r in buckets.items()}
    _write_json_atomic(Path(args.out), payload)
    print(f"n={report.n} acc={report.accuracy:.4f} f1={report.weighted_f1:.4f} "
          f"trigger_acc={report.trigger_accuracy:.4f}")
    return EXIT_OK


def cmd_debias(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    corpus = _load_corpus_or_die(args.corpus)
    split = FewShotSplit.from_json(Path(args.split).read_text(encoding="utf-8"))
    predictor = PipelinePredictor(ckpt.pipeline,
                                  batch_eval=ckpt.train_config.batch_eval)
    reports = debias_eval(predictor, corpus, split, args.K, args.seed)
    _write_json_atomic(Path(args.out), _report_payload(reports))
    for method in ("Full-Test", "IUS", "TUS", "COS"):
        rep = reports.get(method)
        if hasattr(rep, "weighted_f1"):
            print(f"{method}: acc={rep.accuracy:.4f} f1={rep.weighted_f1:.4f}")
        else:
            print(f"{method}: unavailable")
    return EXIT_OK


def _sequence_variants() -> list[dict]:
    variants = [{"name": f"recognizer {o}", "prompt": {"trigger_order": o}}
                for o in TRIGGER_ORDERS]
    variants += [{"name": f"classifier {o}", "prompt": {"event_order": o}}
                 for o in EVENT_ORDERS]
    return variants


def _module_variants() -> list[dict]:
    return [
        {"name": "full", "ablations": {}},
        {"name": "- trigger recognizer", "ablations": {"no_trigger_recognizer": True}},
        {"name": "- event classifier", "ablations": {"no_event_classifier_prompt": True}},
        {"name": "- ontology text", "ablations": {"no_ontology": True}},
    ]


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    corpus = _load_corpus_or_die(cfg["corpus"])
    base_prompt = cfg.get("prompt", {})
    base_train = cfg.get("train", {})
    try:
        split = make_true_fewshot_split(corpus, cfg["K"],
                                        seed=cfg.get("seed", DEFAULT_SEED))
    except SplitError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    by_id = corpus.by_id()
    test_mentions = [by_id[i] for i in split.test]
    variants = (_sequence_variants() if args.grid == "sequence"
                else _module_variants())
    results = {}
    for variant in variants:
        vcfg = json.loads(json.dumps(cfg))  # deep copy
        vcfg.setdefault("prompt", dict(base_prompt)).update(variant.get("prompt", {}))
        tcfg = dict(base_train)
        if variant.get("ablations"):
            tcfg["ablations"] = {**tcfg.get("ablations", {}), **variant["ablations"]}
        vcfg["train"] = tcfg
        vcfg["variant"] = variant["name"]
        prompt_cfg = PromptConfig.from_dict({**PromptConfig().to_dict(),
                                             **vcfg["prompt"]})
        train_cfg = TrainConfig.from_dict(tcfg)
        seed = train_cfg.seeds[0]
        run_dir = _run_dir(vcfg, seed)
        ckpt = _train_one(vcfg, corpus, split, seed, prompt_cfg, train_cfg, run_dir)
        predictor = PipelinePredictor(ckpt.pipeline,
                                      batch_eval=train_cfg.batch_eval)
        report = evaluate(predictor, test_mentions, split.kept_labels)
        _write_json_atomic(run_dir / "report.json", report.to_dict())
        results[variant["name"]] = report.to_dict()
        print(f"{variant['name']}: acc={report.accuracy:.4f} "
              f"f1={report.weighted_f1:.4f} "
              f"trigger_acc={report.trigger_accuracy:.4f}")
    out = Path(cfg.get("output_dir", "runs")) / f"ablation-{args.grid}.json"
    _write_json_atomic(out, results)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edkit",
                                     description="Few-shot event detection laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics and trigger-bias profile")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--topk", type=int, default=3)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="build a K-shot or full-data split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--full", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train on a K-shot split")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--target", choices=("test", "valid", "train"), default="test")
    p.add_argument("--buckets", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("debias", help="Full-Test/IUS/TUS/COS evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_debias)

    p = sub.add_parser("ablate", help="input-sequence or module ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", choices=("sequence", "modules"), default="sequence")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": str(exc), "code": exc.code}), file=sys.stderr)
        return exc.code
    except (SplitError, CorpusError) as exc:
        print(json.dumps({"error": str(exc), "code": EXIT_DATA}), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
