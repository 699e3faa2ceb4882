"""Scoring content against a goal: text cleaning, classifiers, evaluation metrics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .model import ConfigError, ContentItem, Goal, InputDomainError

DEFAULT_STOPLIST = ("#foryoupage", "#foryou", "#fyp")

_HASHTAG = re.compile(r"#\w+")
_WS = re.compile(r"\s+")
_WORD = re.compile(r"[a-z0-9']+")


class ContractViolation(RuntimeError):
    """An operation was called in a way its contract forbids."""


def _alnum_lower(s: str) -> str:
    return "".join(ch for ch in s.lower() if ch.isalnum())


def clean_text(text: str, topic_label: str, stoplist: Iterable[str] = DEFAULT_STOPLIST) -> str:
    """Drop feed-boilerplate hashtags and hashtags spelling out the topic itself.

    >>> clean_text("#foryoupage my cat video #mentalhealth", "mental health")
    'my cat video'
    """
    banned = {_alnum_lower(tag) for tag in stoplist}
    topic_key = _alnum_lower(topic_label)
    if topic_key:
        banned.add(topic_key)

    def drop(m: re.Match) -> str:
        return " " if _alnum_lower(m.group()) in banned else m.group()

    return _WS.sub(" ", _HASHTAG.sub(drop, text)).strip()


@dataclass(frozen=True)
class Oracle:
    """Reads an item's latent attributes, optionally blurred by Gaussian noise."""

    topic_labels: tuple[str, ...]
    noise_sigma: float = 0.05

    def __post_init__(self) -> None:
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class Keyword:
    """Term-coverage scores over cleaned text."""

    topics: Mapping[str, tuple[str, ...]]
    negative_terms: tuple[str, ...]
    stoplist: tuple[str, ...] = DEFAULT_STOPLIST

    def __post_init__(self) -> None:
        for label, terms in self.topics.items():
            if not terms:
                raise ConfigError(f"lexicon for topic {label!r} is empty")

    @property
    def topic_labels(self) -> tuple[str, ...]:
        return tuple(self.topics)


@dataclass(frozen=True)
class External:
    """Scores arrive with the content from a driver; nothing to compute."""

    topic_labels: tuple[str, ...] = field(default_factory=tuple)


ClassifierKind = Oracle | Keyword | External


def load_lexicon(source: str | Path | Mapping[str, Any]) -> Keyword:
    """Build a keyword classifier from a lexicon JSON file or an already-parsed mapping.

    Schema: ``{"topics": {label: [term, ...]}, "negative_terms": [...], "stoplist": [...]}``.
    """
    if isinstance(source, Mapping):
        data = source
    else:
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    try:
        topics = {str(k): tuple(str(t).lower() for t in v) for k, v in data["topics"].items()}
    except (KeyError, AttributeError) as e:
        raise ConfigError("lexicon needs a 'topics' mapping") from e
    return Keyword(
        topics=topics,
        negative_terms=tuple(str(t).lower() for t in data.get("negative_terms", ())),
        stoplist=tuple(data.get("stoplist", DEFAULT_STOPLIST)),
    )


def build_classifier(
    settings: Mapping[str, Any], topic_labels: Sequence[str] = (), base_dir: Path | None = None
) -> ClassifierKind:
    """Classifier from its config mapping; a relative ``lexicon_path`` resolves against ``base_dir``."""
    kind = settings.get("kind", "oracle")
    if kind == "oracle":
        return Oracle(tuple(topic_labels), float(settings.get("noise_sigma", 0.05)))
    if kind == "keyword":
        if "lexicon" in settings:
            return load_lexicon(settings["lexicon"])
        if "lexicon_path" in settings:
            path = Path(settings["lexicon_path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return load_lexicon(path)
        raise ConfigError("keyword classifier needs 'lexicon' or 'lexicon_path'")
    if kind == "external":
        return External(tuple(topic_labels))
    raise ConfigError(f"unknown classifier kind {kind!r}")


def _coverage(words: set[str], text: str, terms: Sequence[str]) -> float:
    distinct = set(terms)
    hits = 0
    for term in distinct:
        if _WORD.fullmatch(term) is None:
            if re.search(rf"\b{re.escape(term)}\b", text):
                hits += 1
        elif term in words:
            hits += 1
    return min(1.0, hits / max(1, len(distinct)))


def _oracle_topic(kind: Oracle, item: ContentItem, label: str, rng: np.random.Generator) -> float:
    try:
        k = kind.topic_labels.index(label)
    except ValueError:
        raise ConfigError(f"topic {label!r} is not in the catalog's topic list") from None
    if k >= len(item.topic_mixture):
        raise ConfigError(f"item {item.id} has no mixture entry for {label!r}")
    return _noisy(item.topic_mixture[k], kind.noise_sigma, rng)


def _noisy(value: float, sigma: float, rng: np.random.Generator) -> float:
    if sigma > 0:
        value += rng.normal(0.0, sigma)
    return float(min(1.0, max(0.0, value)))


def classify(
    item: ContentItem, goal: Goal, kind: ClassifierKind, rng: np.random.Generator
) -> tuple[float, float]:
    """Return (topic confidence, negative-sentiment confidence), both in [0, 1]."""
    if isinstance(kind, Oracle):
        topic = _oracle_topic(kind, item, goal.topic_label, rng)
        return topic, _noisy(item.latent_sentiment, kind.noise_sigma, rng)
    if isinstance(kind, Keyword):
        if goal.topic_label not in kind.topics:
            raise ConfigError(f"topic {goal.topic_label!r} is not in the lexicon")
        text = clean_text(item.text or "", goal.topic_label, kind.stoplist).lower()
        words = set(_WORD.findall(text))
        return (
            _coverage(words, text, kind.topics[goal.topic_label]),
            _coverage(words, text, kind.negative_terms),
        )
    if isinstance(kind, External):
        raise ContractViolation("external scores must arrive through the driver protocol")
    raise TypeError(f"not a classifier: {kind!r}")


def score_all_topics(
    item: ContentItem, goal: Goal, kind: ClassifierKind, rng: np.random.Generator
) -> tuple[float, float, dict[str, float]]:
    """Score the goal topic plus every other topic the classifier knows.

    Noise is drawn per topic in the classifier's label order, then once for
    sentiment. The goal's topic confidence is the entry for its label.
    """
    if isinstance(kind, External):
        raise ContractViolation("external scores must arrive through the driver protocol")
    labels = kind.topic_labels
    if goal.topic_label not in labels:
        raise ConfigError(f"topic {goal.topic_label!r} is not registered with the classifier")
    if isinstance(kind, Oracle):
        scores = {label: _oracle_topic(kind, item, label, rng) for label in labels}
        sent = _noisy(item.latent_sentiment, kind.noise_sigma, rng)
    else:
        scores = {}
        sent = 0.0
        for label in labels:
            topic, sent_here = classify(item, Goal(0, 0, label), kind, rng)
            scores[label] = topic
            if label == goal.topic_label:
                sent = sent_here
    return scores[goal.topic_label], sent, scores


@dataclass(frozen=True, slots=True)
class EvalCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputDomainError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, predicted: bool, actual: bool) -> EvalCounts:
        if predicted and actual:
            return EvalCounts(self.tp + 1, self.fp, self.tn, self.fn)
        if predicted:
            return EvalCounts(self.tp, self.fp + 1, self.tn, self.fn)
        if actual:
            return EvalCounts(self.tp, self.fp, self.tn, self.fn + 1)
        return EvalCounts(self.tp, self.fp, self.tn + 1, self.fn)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def eval_metrics(counts: EvalCounts) -> tuple[float, float, float, float]:
    """Precision, recall, accuracy and F1. Any 0/0 is reported as 0."""
    if counts.total < 1:
        raise InputDomainError("need at least one counted prediction")
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    acc = _ratio(counts.tp + counts.tn, counts.total)
    return p, r, acc, _ratio(2 * p * r, p + r)


def eval_classifier(
    labeled: Sequence[tuple[ContentItem, bool, bool]],
    goal: Goal,
    kind: ClassifierKind,
    threshold: float,
    rng: np.random.Generator | None = None,
) -> tuple[EvalCounts, EvalCounts]:
    """Confusion counts for the topic and sentiment dimensions.

    Each entry is ``(item, is_on_topic, is_negative)``; a prediction is
    positive when its confidence is strictly above ``threshold``.
    """
    if not labeled:
        raise InputDomainError("labeled set is empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    topic, sent = EvalCounts(), EvalCounts()
    for item, on_topic, negative in labeled:
        t_conf, s_conf = classify(item, goal, kind, rng)
        topic = topic.add(t_conf > threshold, bool(on_topic))
        sent = sent.add(s_conf > threshold, bool(negative))
    return topic, sent
