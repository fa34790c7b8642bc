import numpy as np
import pytest
from sklearn.metrics import precision_recall_fscore_support

from edkit.corpus import EventMention, LabelSpace, build_corpus
from edkit.evaluator import (DEFAULT_LENGTH_BUCKETS, EvalError, Prediction,
                             compute_metrics, debias_eval, evaluate,
                             length_bucket_eval)
from edkit.sampler import make_true_fewshot_split
from edkit.synth import make_separable_corpus, make_shortcut_corpus


def mention(mid, label, trigger="hit", n_words=3, pos=1):
    words = tuple(["w"] * pos + [trigger] + ["w"] * (n_words - pos - 1))
    return EventMention(mid, words, pos, pos + 1, trigger, label)


def pred(m, label=None, trigger=None, index=None):
    return Prediction(
        mention_id=m.id,
        predicted_trigger_word=trigger if trigger is not None else m.trigger_text,
        predicted_trigger_index=index if index is not None else m.trigger_start,
        predicted_label=label if label is not None else m.label,
    )


class OraclePredictor:
    """Looks the gold label and trigger up from the mention itself."""

    def predict(self, mentions):
        return [pred(m) for m in mentions]


class FixedLabelPredictor:
    def __init__(self, label):
        self.label = label

    def predict(self, mentions):
        return [pred(m, label=self.label) for m in mentions]


class ShortcutPredictor:
    """Memorizes trigger -> majority label over a reference corpus, the
    classic surface shortcut that confusion sampling is meant to expose."""

    def __init__(self, corpus):
        votes = {}
        for m in corpus.mentions:
            votes.setdefault(m.trigger_text.casefold(), {})
            votes[m.trigger_text.casefold()][m.label] = \
                votes[m.trigger_text.casefold()].get(m.label, 0) + 1
        self.table = {t: max(v, key=lambda lab: (v[lab], lab)) for t, v in votes.items()}
        self.fallback = corpus.labels.labels[0]

    def predict(self, mentions):
        return [pred(m, label=self.table.get(m.trigger_text.casefold(), self.fallback))
                for m in mentions]


class TestComputeMetrics:
    def test_all_correct(self):
        golds = [mention(f"m{i}", "A") for i in range(4)]
        rep = compute_metrics(OraclePredictor().predict(golds), golds,
                              LabelSpace(("A",)))
        assert rep.accuracy == rep.weighted_f1 == rep.trigger_accuracy == 1.0
        assert rep.n == 4

    def test_hand_computed_weighted_f1(self):
        # supports A:3, B:1; predictions: A,A,B | B
        golds = [mention("m0", "A"), mention("m1", "A"), mention("m2", "A"),
                 mention("m3", "B")]
        preds = [pred(golds[0]), pred(golds[1]), pred(golds[2], label="B"),
                 pred(golds[3])]
        rep = compute_metrics(preds, golds, LabelSpace(("A", "B")))
        # A: P=1, R=2/3, F=0.8 ; B: P=0.5, R=1, F=2/3
        assert rep.weighted_f1 == pytest.approx((3 * 0.8 + 1 * (2 / 3)) / 4)
        assert rep.weighted_f1 == pytest.approx(0.7666666666666667, abs=1e-9)
        assert rep.accuracy == pytest.approx(0.75)

    def test_zero_predicted_label_counts_zero(self):
        golds = [mention("m0", "A"), mention("m1", "B")]
        preds = [pred(golds[0]), pred(golds[1], label="A")]
        rep = compute_metrics(preds, golds, LabelSpace(("A", "B")))
        # B never predicted: its precision term is 0/0 := 0
        assert rep.weighted_recall == pytest.approx(0.5)

    @pytest.mark.parametrize("case", range(100))
    def test_matches_sklearn(self, case):
        rng = np.random.default_rng(case)
        n_labels = int(rng.integers(2, 6))
        labels = [f"L{i}" for i in range(n_labels)]
        n = int(rng.integers(5, 60))
        gold_idx = rng.integers(0, n_labels, size=n)
        pred_idx = rng.integers(0, n_labels, size=n)
        golds = [mention(f"m{i}", labels[gold_idx[i]]) for i in range(n)]
        preds = [pred(golds[i], label=labels[pred_idx[i]]) for i in range(n)]
        rep = compute_metrics(preds, golds, LabelSpace(tuple(labels)))
        p, r, f, _ = precision_recall_fscore_support(
            gold_idx, pred_idx, average="weighted", zero_division=0,
            labels=list(range(n_labels)))
        assert rep.weighted_precision == pytest.approx(p, abs=1e-12)
        assert rep.weighted_recall == pytest.approx(r, abs=1e-12)
        assert rep.weighted_f1 == pytest.approx(f, abs=1e-12)
        assert rep.accuracy == pytest.approx(float(np.mean(gold_idx == pred_idx)))

    def test_uniform_support_equals_macro(self):
        rng = np.random.default_rng(7)
        labels = ("A", "B", "C")
        golds = [mention(f"m{i}", labels[i % 3]) for i in range(30)]
        preds = [pred(m, label=labels[int(rng.integers(0, 3))]) for m in golds]
        rep = compute_metrics(preds, golds, LabelSpace(labels))
        gold_idx = [i % 3 for i in range(30)]
        pred_idx = [labels.index(p.predicted_label) for p in preds]
        _, _, f_macro, _ = precision_recall_fscore_support(
            gold_idx, pred_idx, average="macro", zero_division=0)
        assert rep.weighted_f1 == pytest.approx(f_macro, abs=1e-12)

    def test_trigger_any_span_word_counts(self):
        m = EventMention("m0", ("took", "office", "now"), 0, 2, "took office", "A")
        p = pred(m, trigger="Office", index=1)
        rep = compute_metrics([p], [m], LabelSpace(("A",)))
        assert rep.trigger_accuracy == 1.0

    def test_trigger_word_outside_span_is_wrong(self):
        m = mention("m0", "A")
        rep = compute_metrics([pred(m, trigger="w", index=0)], [m],
                              LabelSpace(("A",)))
        assert rep.trigger_accuracy == 0.0
        assert rep.accuracy == 1.0

    def test_empty_set_rejected(self):
        with pytest.raises(EvalError):
            compute_metrics([], [], LabelSpace(("A",)))

    def test_misaligned_ids_rejected(self):
        golds = [mention("m0", "A")]
        with pytest.raises(EvalError):
            compute_metrics([pred(mention("other", "A"))], golds, LabelSpace(("A",)))


class TestLengthBuckets:
    def make_pool(self, lengths):
        return [mention(f"m{i}", "A", n_words=n) for i, n in enumerate(lengths)]

    def test_boundaries_half_open(self):
        pool = self.make_pool([10, 11, 20, 21])
        out = length_bucket_eval(OraclePredictor(), pool, LabelSpace(("A",)))
        # 10 falls in no bucket; 11 and 20 in (10,20]; 21 in (20,30]
        assert out["(10,20]"].n == 2
        assert out["(20,30]"].n == 1

    def test_empty_buckets_absent(self):
        pool = self.make_pool([15])
        out = length_bucket_eval(OraclePredictor(), pool, LabelSpace(("A",)))
        assert list(out) == ["(10,20]"]

    def test_census(self):
        lengths = [12, 25, 25, 33, 41, 55, 55, 55]
        pool = self.make_pool(lengths)
        out = length_bucket_eval(OraclePredictor(), pool, LabelSpace(("A",)))
        assert sum(r.n for r in out.values()) == len(lengths)

    def test_overlapping_intervals_rejected(self):
        with pytest.raises(EvalError):
            length_bucket_eval(OraclePredictor(), self.make_pool([15]),
                               LabelSpace(("A",)), intervals=((10, 25), (20, 30)))

    def test_default_intervals_cover_10_to_60(self):
        assert DEFAULT_LENGTH_BUCKETS[0][0] == 10
        assert DEFAULT_LENGTH_BUCKETS[-1][1] == 60


class TestBatchInvariance:
    def test_metrics_independent_of_batch_eval(self):
        # the protocol chunks at batch_eval; metrics must not change
        from edkit.encoder import toy_encoder
        from edkit.evaluator import PipelinePredictor
        from edkit.pipeline import PromptPipeline, pipeline_vocab
        from edkit.prompts import PromptConfig
        corpus = make_separable_corpus(n_types=3, per_type=6, seed=2)
        vocab = pipeline_vocab(corpus, PromptConfig())
        spec, enc = toy_encoder(seed=1, d=8, vocab=vocab)
        pipe = PromptPipeline(spec, enc, corpus.labels, PromptConfig())
        mentions = list(corpus.mentions)
        reps = [evaluate(PipelinePredictor(pipe, batch_eval=b), mentions, corpus.labels)
                for b in (1, 4, 128)]
        assert reps[0] == reps[1] == reps[2]


class TestDebiasEval:
    def test_full_suite_with_oracle(self):
        corpus = make_shortcut_corpus(seed=1)
        split = make_true_fewshot_split(corpus, 2, seed=0)
        out = debias_eval(OraclePredictor(), corpus, split, K=2, seed=0)
        for key in ("Full-Test", "IUS", "TUS", "COS"):
            assert out[key].accuracy == 1.0

    def test_ius_subset_size(self):
        corpus = make_separable_corpus(n_types=4, per_type=10, seed=3)
        split = make_true_fewshot_split(corpus, 2, seed=0)
        out = debias_eval(OraclePredictor(), corpus, split, K=3, seed=0)
        assert out["IUS"].n == 3 * 4

    def test_cos_unavailable_when_triggers_unique(self):
        corpus = make_separable_corpus(n_types=3, per_type=10, seed=4)
        split = make_true_fewshot_split(corpus, 2, seed=0)
        out = debias_eval(OraclePredictor(), corpus, split, K=2, seed=0)
        assert "unavailable" in out["COS"]
        assert out["IUS"].n == 6

    def test_shortcut_predictor_drops_under_cos(self):
        # a trigger-memorizing predictor looks strong on the full test set
        # but collapses on the confusing-trigger subset
        corpus = make_shortcut_corpus(seed=9)
        split = make_true_fewshot_split(corpus, 3, seed=1)
        predictor = ShortcutPredictor(corpus)
        out = debias_eval(predictor, corpus, split, K=3, seed=1)
        assert out["COS"].accuracy < out["IUS"].accuracy
        assert out["COS"].accuracy < out["Full-Test"].accuracy
