import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedaudit.classify import (
    ContractViolation,
    EvalCounts,
    External,
    Keyword,
    Oracle,
    build_classifier,
    classify,
    clean_text,
    eval_classifier,
    eval_metrics,
    load_lexicon,
    score_all_topics,
)
from feedaudit.model import ConfigError, ContentItem, Goal, InputDomainError, state_from_scores

from oracles import confusion_metrics

LABELS = ("mental health", "pets")
MH = Goal(10, 10, "mental health")


def item(mix=(0.9, 0.1), sent=0.8, text=None):
    return ContentItem("i", mix, sent, 0.5, 10.0, text)


def test_clean_text_examples():
    assert clean_text("#foryoupage my cat video #mentalhealth", "mental health") == "my cat video"
    assert clean_text("", "anything") == ""
    assert clean_text("#EdRecovery hope #fyp", "ed recovery") == "hope"


def test_clean_text_keeps_other_hashtags():
    assert clean_text("#cats  are   #great", "mental health") == "#cats are #great"


@given(st.text(alphabet="ab #\t\nfyp", max_size=40), st.sampled_from(["ab", "mental health", "fyp"]))
def test_clean_text_shrinks_and_is_idempotent(text, label):
    once = clean_text(text, label)
    assert len(once) <= len(text)
    assert clean_text(once, label) == once


def test_oracle_zero_noise_is_identity():
    kind = Oracle(LABELS, 0.0)
    rng = np.random.default_rng(0)
    assert classify(item(), MH, kind, rng) == (0.9, 0.8)
    assert classify(item((0.0, 0.0), 0.0), MH, kind, rng) == (0.0, 0.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_oracle_recovers_discretized_latents(t, s):
    mix = (t, 0.0)
    got = classify(item(mix, s), MH, Oracle(LABELS, 0.0), np.random.default_rng(0))
    assert state_from_scores(*got) == state_from_scores(t, s)


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_oracle_noise_stays_in_unit_interval(seed, t, s):
    tc, sc = classify(item((t, 0.0), s), MH, Oracle(LABELS, 0.5), np.random.default_rng(seed))
    assert 0.0 <= tc <= 1.0 and 0.0 <= sc <= 1.0


def test_oracle_is_deterministic_given_stream():
    kind = Oracle(LABELS, 0.05)
    a = classify(item(), MH, kind, np.random.default_rng(5))
    b = classify(item(), MH, kind, np.random.default_rng(5))
    assert a == b


def test_unknown_topic_is_config_error():
    with pytest.raises(ConfigError):
        classify(item(), Goal(1, 1, "weather"), Oracle(LABELS), np.random.default_rng(0))
    kw = load_lexicon({"topics": {"pets": ["cat"]}})
    with pytest.raises(ConfigError):
        classify(item(text="cat"), MH, kw, np.random.default_rng(0))


def test_external_cannot_classify():
    with pytest.raises(ContractViolation):
        classify(item(), MH, External(LABELS), np.random.default_rng(0))


def test_keyword_coverage_example():
    kw = load_lexicon({"topics": {"mental health": ["depression", "anxiety", "grief", "therapy"]}})
    t, s = classify(item(text="grief and therapy talk"), MH, kw, np.random.default_rng(0))
    assert t == pytest.approx(2 / 4)
    assert s == 0.0


def test_keyword_phrases_and_cleaning():
    kw = load_lexicon({
        "topics": {"mental health": ["mental health", "therapy"]},
        "negative_terms": ["sad", "alone"],
    })
    # the topic hashtag is stripped, the plain phrase is not
    t, s = classify(item(text="#MentalHealth therapy day, so SAD"), MH, kw, None)
    assert (t, s) == (0.5, 0.5)
    t, _ = classify(item(text="talking mental health"), MH, kw, None)
    assert t == 0.5


def test_keyword_lexicon_must_be_non_empty():
    with pytest.raises(ConfigError):
        Keyword({"pets": ()}, ())
    with pytest.raises(ConfigError):
        load_lexicon({"nope": 1})


def test_build_classifier_kinds(tmp_path):
    assert isinstance(build_classifier({"kind": "oracle", "noise_sigma": 0}, LABELS), Oracle)
    assert isinstance(build_classifier({"kind": "external"}, LABELS), External)
    (tmp_path / "lex.json").write_text('{"topics": {"pets": ["cat"]}}')
    kw = build_classifier({"kind": "keyword", "lexicon_path": "lex.json"}, (), tmp_path)
    assert kw.topic_labels == ("pets",)
    with pytest.raises(ConfigError):
        build_classifier({"kind": "magic"})
    with pytest.raises(ConfigError):
        build_classifier({"kind": "keyword"})
    with pytest.raises(ConfigError):
        Oracle(LABELS, -0.1)


def test_score_all_topics_zero_noise():
    t, s, scores = score_all_topics(item(), MH, Oracle(LABELS, 0.0), np.random.default_rng(0))
    assert (t, s) == (0.9, 0.8)
    assert scores == {"mental health": 0.9, "pets": 0.1}


def test_eval_metrics_examples():
    assert eval_metrics(EvalCounts(1, 0, 1, 0)) == (1, 1, 1, 1)
    assert eval_metrics(EvalCounts(0, 0, 5, 0)) == (0, 0, 1, 0)
    p, r, a, f = eval_metrics(EvalCounts(tp=7, fp=3, tn=10, fn=1))
    assert (p, r, a, f) == pytest.approx((0.7, 0.875, 17 / 21, 0.7 / 0.9), abs=1e-12)


def test_eval_counts_validation():
    with pytest.raises(InputDomainError):
        EvalCounts(-1, 0, 0, 0)
    with pytest.raises(InputDomainError):
        eval_metrics(EvalCounts())


counts = st.builds(EvalCounts, *(st.integers(0, 50) for _ in range(4))).filter(lambda c: c.total > 0)


@given(counts)
def test_eval_metrics_against_oracle(c):
    assert eval_metrics(c) == pytest.approx(confusion_metrics(c.tp, c.fp, c.tn, c.fn), abs=1e-12)


@given(counts)
def test_accuracy_symmetric_and_f1_zero_without_hits(c):
    swapped = EvalCounts(c.tn, c.fn, c.tp, c.fp)
    assert eval_metrics(c)[2] == pytest.approx(eval_metrics(swapped)[2])
    if c.tp == 0:
        assert eval_metrics(c)[3] == 0


def test_eval_classifier_single_items():
    kind = Oracle(LABELS, 0.0)
    on = item((1.0, 0.0), 0.0)
    topic, _ = eval_classifier([(on, True, False)], MH, kind, 0.5)
    assert topic == EvalCounts(tp=1)
    topic, sent = eval_classifier([(on, False, False)], MH, kind, 0.5)
    assert topic == EvalCounts(fp=1)
    assert sent == EvalCounts(tn=1)
    with pytest.raises(InputDomainError):
        eval_classifier([], MH, kind, 0.5)
