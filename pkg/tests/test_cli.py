import json

import pytest

from edkit.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from edkit.corpus import write_corpus
from edkit.synth import make_separable_corpus


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.jsonl"
    write_corpus(make_separable_corpus(n_types=3, per_type=8, seed=11), path)
    return path


class TestStats:
    def test_writes_reports(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "stats"
        assert main(["stats", "--corpus", str(corpus_file),
                     "--out", str(out)]) == EXIT_OK
        stats = json.loads((out / "stats.json").read_text())
        assert stats["n_types"] == 3
        assert stats["n_mentions"] == 24
        assert (out / "bias_profile.json").exists()
        assert "types=3" in capsys.readouterr().out

    def test_deterministic_output(self, corpus_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["stats", "--corpus", str(corpus_file), "--out", str(a)])
        main(["stats", "--corpus", str(corpus_file), "--out", str(b)])
        assert (a / "stats.json").read_bytes() == (b / "stats.json").read_bytes()

    def test_missing_corpus(self, tmp_path):
        code = main(["stats", "--corpus", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "o")])
        assert code == EXIT_DATA


class TestSplit:
    def test_few_shot(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "split.json"
        assert main(["split", "--corpus", str(corpus_file), "--K", "2",
                     "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert len(doc["train"]) == len(doc["valid"]) == 6
        assert len(doc["test"]) == 24 - 12
        assert "train=6" in capsys.readouterr().out

    def test_k_zero_is_usage_error(self, corpus_file, tmp_path):
        code = main(["split", "--corpus", str(corpus_file), "--K", "0",
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_USAGE

    def test_k_too_large_is_data_error(self, corpus_file, tmp_path):
        code = main(["split", "--corpus", str(corpus_file), "--K", "50",
                     "--out", str(tmp_path / "s.json")])
        assert code == EXIT_DATA

    def test_full_split(self, tmp_path):
        big = tmp_path / "big.jsonl"
        write_corpus(make_separable_corpus(n_types=3, per_type=10, seed=11), big)
        out = tmp_path / "full.json"
        assert main(["split", "--corpus", str(big), "--full",
                     "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["K"] == 0
        assert len(doc["train"]) + len(doc["valid"]) + len(doc["test"]) == 30

    def test_unknown_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE


@pytest.fixture(scope="module")
def trained(corpus_file, tmp_path_factory):
    """One tiny end-to-end train shared by the downstream command tests."""
    work = tmp_path_factory.mktemp("run")
    cfg = {
        "corpus": str(corpus_file),
        "K": 2,
        "seed": 5,
        "output_dir": str(work / "runs"),
        "encoder": {"d": 16},
        "train": {"epochs": 2, "batch_train": 4, "batch_eval": 16, "seeds": [1]},
    }
    cfg_path = work / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
    run_dirs = list((work / "runs").iterdir())
    assert len(run_dirs) == 1
    split_path = work / "split.json"
    assert main(["split", "--corpus", str(corpus_file), "--K", "2",
                 "--seed", "5", "--out", str(split_path)]) == EXIT_OK
    return work, cfg, run_dirs[0], split_path


class TestTrainArtifacts:
    def test_run_directory_contents(self, trained):
        _, _, run_dir, _ = trained
        assert (run_dir / "checkpoint" / "weights.pt").exists()
        assert (run_dir / "checkpoint" / "manifest.json").exists()
        assert (run_dir / "valid_metrics.json").exists()
        resolved = json.loads((run_dir / "resolved_config.json").read_text())
        assert resolved["stop_reason"] == "max-epochs"
        lines = (run_dir / "trainlog.jsonl").read_text().splitlines()
        assert all("loss" in json.loads(line) for line in lines)
        assert len(lines) == 2 * 2  # 6 train mentions / batch 4 -> 2 iters/epoch

    def test_missing_config_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"corpus": "x"}))
        assert main(["train", "--config", str(bad)]) == EXIT_USAGE


class TestEval:
    def test_eval_test_target(self, trained, tmp_path, capsys):
        _, _, run_dir, split_path = trained
        out = tmp_path / "report.json"
        code = main(["eval", "--checkpoint", str(run_dir / "checkpoint"),
                     "--corpus", json.loads((split_path.parent / "config.json")
                                            .read_text())["corpus"],
                     "--split", str(split_path), "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["n"] == 12
        assert 0.0 <= doc["weighted_f1"] <= 1.0
        assert "acc=" in capsys.readouterr().out

    def test_eval_with_buckets(self, trained, corpus_file, tmp_path):
        _, _, run_dir, split_path = trained
        out = tmp_path / "report.json"
        code = main(["eval", "--checkpoint", str(run_dir / "checkpoint"),
                     "--corpus", str(corpus_file), "--split", str(split_path),
                     "--buckets", "--out", str(out)])
        assert code == EXIT_OK
        assert "buckets" in json.loads(out.read_text())

    def test_bad_checkpoint_path(self, corpus_file, trained, tmp_path):
        _, _, _, split_path = trained
        code = main(["eval", "--checkpoint", str(tmp_path / "nope"),
                     "--corpus", str(corpus_file), "--split", str(split_path),
                     "--out", str(tmp_path / "r.json")])
        assert code == EXIT_DATA


class TestDebias:
    def test_reports_all_methods(self, trained, corpus_file, tmp_path, capsys):
        _, _, run_dir, split_path = trained
        out = tmp_path / "debias.json"
        code = main(["debias", "--checkpoint", str(run_dir / "checkpoint"),
                     "--corpus", str(corpus_file), "--split", str(split_path),
                     "--K", "2", "--seed", "5", "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert set(doc) >= {"Full-Test", "IUS", "TUS", "COS"}
        assert doc["IUS"]["n"] == 6
        # every trigger is unique to its type in this corpus
        assert "unavailable" in doc["COS"]
        printed = capsys.readouterr().out
        assert "COS: unavailable" in printed


class TestAblate:
    def test_module_grid(self, corpus_file, tmp_path, capsys):
        cfg = {
            "corpus": str(corpus_file),
            "K": 2,
            "seed": 5,
            "output_dir": str(tmp_path / "runs"),
            "encoder": {"d": 8},
            "train": {"epochs": 1, "batch_train": 8, "batch_eval": 16, "seeds": [1]},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(cfg))
        code = main(["ablate", "--config", str(cfg_path), "--grid", "modules"])
        assert code == EXIT_OK
        results = json.loads((tmp_path / "runs" / "ablation-modules.json").read_text())
        assert set(results) == {"full", "- trigger recognizer",
                                "- event classifier", "- ontology text"}
        out = capsys.readouterr().out
        assert out.count("f1=") == 4

    def test_sequence_grid(self, corpus_file, tmp_path):
        cfg = {
            "corpus": str(corpus_file),
            "K": 2,
            "seed": 5,
            "output_dir": str(tmp_path / "runs"),
            "encoder": {"d": 8},
            "train": {"epochs": 1, "batch_train": 8, "batch_eval": 16, "seeds": [1]},
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(cfg))
        code = main(["ablate", "--config", str(cfg_path), "--grid", "sequence"])
        assert code == EXIT_OK
        results = json.loads((tmp_path / "runs" / "ablation-sequence.json").read_text())
        assert len(results) == 2 + 6  # recognizer orders + classifier orders
