import pytest
import torch

from edkit.corpus import EventMention, build_corpus
from edkit.prompts import PromptConfig
from edkit.synth import make_separable_corpus

torch.set_num_threads(1)

FIG4_WORDS = ("And", "I", "agree", "that", "we", "shouldn't", "send",
              "people", "over", "there.")


@pytest.fixture
def fig4_mention():
    return EventMention(id="fig4", words=FIG4_WORDS, trigger_start=6,
                        trigger_end=7, trigger_text="send", label="Movement.Transport")


def mention(mid, words, start, end, label, trigger=None):
    words = tuple(words)
    return EventMention(id=mid, words=words, trigger_start=start,
                        trigger_end=end,
                        trigger_text=trigger or " ".join(words[start:end]),
                        label=label)


@pytest.fixture
def tiny_corpus():
    ms = [
        mention("a0", ["He", "died", "yesterday"], 1, 2, "Life.Die"),
        mention("a1", ["She", "died", "today"], 1, 2, "Life.Die"),
        mention("a2", ["They", "married", "in", "June"], 1, 2, "Life.Marry"),
        mention("a3", ["He", "was", "elected", "mayor"], 2, 3, "Personnel.Elect"),
    ]
    return build_corpus(ms, source="tiny")


@pytest.fixture(scope="session")
def sep_corpus():
    return make_separable_corpus(n_types=8, per_type=32, seed=7)


@pytest.fixture
def prompt_cfg():
    return PromptConfig()
