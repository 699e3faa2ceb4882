"""A parameterized stand-in for a "For You" recommendation system.

The simulator blends item popularity with a personalization score whose weight
grows as the profile accumulates interactions, samples one item per step via a
softmax, and nudges the profile after every action. None of this claims to
describe a real platform; it exists so the audit loop has something concrete
and reproducible to drive.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .model import (
    ACTIONS,
    Action,
    ActionMask,
    ConfigError,
    ContentItem,
    EnvironmentExhausted,
    Observation,
)

DEFAULT_ACTION_WEIGHTS = {
    Action.LIKE: 0.30,
    Action.WATCH: 0.15,
    Action.BOOKMARK: 0.35,
    Action.REPOST: 0.40,
    Action.SKIP: -0.10,
}

DEFAULT_TOPICS = (
    "pets",
    "sports",
    "weather",
    "comedy",
    "mental health",
    "eating disorder",
    "self-harm",
    "physical violence",
    "hate speech",
)

# Calibrated fixture: benign topics skew happy, popular and plentiful; the
# audited ones skew sad and niche.
DEFAULT_SENTIMENT_BETA = {
    "pets": (2.0, 5.0),
    "sports": (2.0, 5.0),
    "weather": (2.0, 5.0),
    "comedy": (1.5, 6.0),
    "mental health": (6.0, 2.0),
    "eating disorder": (4.0, 2.0),
    "self-harm": (5.0, 2.0),
    "physical violence": (4.0, 2.0),
    "hate speech": (4.0, 2.0),
}

DEFAULT_ITEMS_PER_TOPIC = {
    "pets": 300,
    "sports": 300,
    "weather": 300,
    "comedy": 300,
    "mental health": 150,
    "eating disorder": 100,
    "self-harm": 100,
    "physical violence": 100,
    "hate speech": 100,
}

DEFAULT_POPULARITY_BETA = {
    "pets": (4.0, 2.0),
    "sports": (4.0, 2.0),
    "weather": (3.0, 3.0),
    "comedy": (4.0, 2.0),
}


@dataclass(frozen=True)
class SimParams:
    action_weights: Mapping[Action, float] = field(default_factory=lambda: dict(DEFAULT_ACTION_WEIGHTS))
    lambda0: float = 0.9
    lambda_tau: float = 40.0
    softmax_temp: float = 0.15
    no_repeat_window: int = 500
    # Sentiment pull per unit of action weight.
    sentiment_learn_rate: float = 0.5
    invalid_prob: Mapping[Action, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        weights = {Action(k): float(v) for k, v in self.action_weights.items()}
        for a in ACTIONS:
            weights.setdefault(a, DEFAULT_ACTION_WEIGHTS[a])
        object.__setattr__(self, "action_weights", weights)
        object.__setattr__(self, "invalid_prob", {Action(k): float(v) for k, v in self.invalid_prob.items()})
        if not 0.0 <= self.lambda0 <= 1.0:
            raise ConfigError("lambda0 must lie in [0, 1]")
        if self.lambda_tau <= 0 or self.softmax_temp <= 0:
            raise ConfigError("lambda_tau and softmax_temp must be positive")
        if self.no_repeat_window < 0:
            raise ConfigError("no_repeat_window must be >= 0")
        for a, p in self.invalid_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"invalid_prob for {a.value} outside [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SimParams:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown simulator params: {sorted(unknown)}")
        return cls(**d)

    def weight(self, action: Action) -> float:
        return self.action_weights[action]


@dataclass(frozen=True, slots=True)
class SimUserProfile:
    interest: tuple[float, ...]
    sentiment_affinity: float = 0.5
    interactions: int = 0


class Catalog:
    """An immutable pool of items plus array views used for scoring."""

    def __init__(self, items: Sequence[ContentItem], topic_labels: Sequence[str]):
        self.items = tuple(items)
        self.topic_labels = tuple(topic_labels)
        if len(self.items) < 1:
            raise ConfigError("catalog is empty")
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ConfigError("catalog item ids must be unique")
        for it in self.items:
            if len(it.topic_mixture) != len(self.topic_labels):
                raise ConfigError(f"item {it.id} mixture length does not match the topic list")
        self.mixtures = np.array([it.topic_mixture for it in self.items], dtype=float)
        self.mixtures.shape = (len(self.items), len(self.topic_labels))
        self.popularity = np.array([it.popularity for it in self.items])
        self.sentiment = np.array([it.latent_sentiment for it in self.items])
        self.index = {it.id: i for i, it in enumerate(self.items)}

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i: int) -> ContentItem:
        return self.items[i]

    def topic_index(self, label: str) -> int:
        try:
            return self.topic_labels.index(label)
        except ValueError:
            raise ConfigError(f"topic {label!r} is not in the catalog") from None


def reset_profile(params: SimParams, n_topics: int) -> SimUserProfile:
    """A brand-new user: flat low interest, neutral sentiment, no history."""
    return SimUserProfile(interest=(0.05,) * n_topics, sentiment_affinity=0.5, interactions=0)


def popularity_weight(params: SimParams, interactions: int) -> float:
    return params.lambda0 * math.exp(-interactions / params.lambda_tau)


def item_scores(profile: SimUserProfile, catalog: Catalog, params: SimParams) -> np.ndarray:
    lam = popularity_weight(params, profile.interactions)
    interest = np.asarray(profile.interest)
    overlap = catalog.mixtures @ interest
    norm = interest.sum() * catalog.mixtures.sum(axis=1)
    personal = overlap / np.maximum(1e-9, norm)
    personal *= 1.0 - np.abs(profile.sentiment_affinity - catalog.sentiment)
    return lam * catalog.popularity + (1.0 - lam) * personal


def _excluded(catalog: Catalog, recent: Sequence[str], window: int) -> np.ndarray:
    mask = np.zeros(len(catalog), dtype=bool)
    if window > 0:
        for item_id in list(recent)[-window:]:
            i = catalog.index.get(item_id)
            if i is not None:
                mask[i] = True
    return mask


def recommend(
    profile: SimUserProfile,
    catalog: Catalog,
    params: SimParams,
    rng: np.random.Generator,
    recent: Sequence[str] = (),
) -> ContentItem:
    """Sample the next item by softmax over blended scores, skipping recent repeats.

    If the no-repeat window rules out every item it is halved once; if that
    still leaves nothing, the environment is exhausted.
    """
    scores = item_scores(profile, catalog, params)
    window = params.no_repeat_window
    blocked = _excluded(catalog, recent, window)
    if blocked.all():
        blocked = _excluded(catalog, recent, window // 2)
        if blocked.all():
            raise EnvironmentExhausted("every catalog item was shown within the no-repeat window")
    logits = np.where(blocked, -np.inf, scores / params.softmax_temp)
    weights = np.exp(logits - logits.max())
    cdf = np.cumsum(weights)
    u = rng.random() * cdf[-1]
    # Blocked items have zero-width bins, so side="right" can never land on one.
    i = int(np.searchsorted(cdf, u, side="right"))
    if i >= len(cdf):  # u rounded up to cdf[-1]
        i = int(np.flatnonzero(weights)[-1])
    return catalog[i]


def apply_action(profile: SimUserProfile, item: ContentItem, action: Action, params: SimParams) -> SimUserProfile:
    """Update the profile after ``action`` on ``item``.

    Positive weights pull interest toward 1 in proportion to the item's topic
    mixture and pull sentiment affinity toward the item's sentiment; negative
    weights shrink interest toward 0 and leave affinity alone.
    """
    w = params.weight(action)
    interest = list(profile.interest)
    affinity = profile.sentiment_affinity
    if w > 0:
        for k, m in enumerate(item.topic_mixture):
            interest[k] += w * m * (1.0 - interest[k])
        affinity += params.sentiment_learn_rate * w * (item.latent_sentiment - affinity)
    elif w < 0:
        for k, m in enumerate(item.topic_mixture):
            interest[k] += w * m * interest[k]
    return SimUserProfile(
        interest=tuple(min(1.0, max(0.0, v)) for v in interest),
        sentiment_affinity=min(1.0, max(0.0, affinity)),
        interactions=profile.interactions + 1,
    )


def action_mask(item: ContentItem, params: SimParams, rng: np.random.Generator | None = None) -> ActionMask:
    # One uniform draw per non-skip action whenever any invalidation is configured.
    if not any(params.invalid_prob.values()):
        return ActionMask.all_valid()
    if rng is None:
        raise ConfigError("a random stream is needed when invalid_prob is set")
    valid = []
    for a in ACTIONS:
        if a is Action.SKIP:
            valid.append(True)
        else:
            valid.append(bool(rng.random() >= params.invalid_prob.get(a, 0.0)))
    return ActionMask(tuple(valid))


# --- catalog generation -------------------------------------------------------


@dataclass(frozen=True)
class CatalogParams:
    topics: tuple[str, ...] = DEFAULT_TOPICS
    items_per_topic: int | Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_ITEMS_PER_TOPIC))
    # Share of an item's mixture on its own topic ~ Beta(focus).
    focus_beta: tuple[float, float] = (8.0, 2.0)
    # Fraction of the leftover share spread over the other topics.
    spill: float = 0.5
    sentiment_beta: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_SENTIMENT_BETA))
    default_sentiment_beta: tuple[float, float] = (2.0, 4.0)
    popularity_beta: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_POPULARITY_BETA))
    default_popularity_beta: tuple[float, float] = (2.0, 3.0)
    duration_range: tuple[float, float] = (5.0, 60.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "topics", tuple(self.topics))
        if len(self.topics) < 1 or len(set(self.topics)) != len(self.topics):
            raise ConfigError("catalog topics must be non-empty and unique")
        if not 0.0 <= self.spill <= 1.0:
            raise ConfigError("spill must lie in [0, 1]")
        # Defaults may name topics a custom catalog does not have; ignore those.
        for name in ("sentiment_beta", "popularity_beta"):
            kept = {k: tuple(v) for k, v in getattr(self, name).items() if k in self.topics}
            object.__setattr__(self, name, kept)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> CatalogParams:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown catalog params: {sorted(unknown)}")
        d = dict(d)
        for key in ("focus_beta", "default_sentiment_beta", "default_popularity_beta", "duration_range", "topics"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("sentiment_beta", "popularity_beta"):
            if key in d:
                d[key] = {k: tuple(v) for k, v in d[key].items()}
        return cls(**d)

    def count(self, label: str) -> int:
        # Topics missing from a per-topic map get 200 items.
        if isinstance(self.items_per_topic, Mapping):
            return int(self.items_per_topic.get(label, 200))
        return int(self.items_per_topic)


def generate_catalog(params: CatalogParams, rng: np.random.Generator) -> Catalog:
    """Draw a catalog topic by topic, in the order the topics are listed."""
    n = len(params.topics)
    items: list[ContentItem] = []
    for k, label in enumerate(params.topics):
        sent_a, sent_b = params.sentiment_beta.get(label, params.default_sentiment_beta)
        pop_a, pop_b = params.popularity_beta.get(label, params.default_popularity_beta)
        slug = "".join(ch if ch.isalnum() else "-" for ch in label)
        for j in range(params.count(label)):
            focus = float(rng.beta(*params.focus_beta))
            mixture = np.zeros(n)
            if n > 1:
                mixture[np.arange(n) != k] = rng.dirichlet(np.ones(n - 1)) * (1.0 - focus) * params.spill
            mixture[k] = focus
            lo, hi = params.duration_range
            items.append(
                ContentItem(
                    id=f"{slug}-{j:04d}",
                    topic_mixture=tuple(float(round(v, 6)) for v in mixture),
                    latent_sentiment=round(float(rng.beta(sent_a, sent_b)), 6),
                    popularity=round(float(rng.beta(pop_a, pop_b)), 6),
                    duration_s=round(float(rng.uniform(lo, hi)), 3),
                )
            )
    if len(items) < 2:
        raise ConfigError("catalog needs at least two items")
    return Catalog(items, params.topics)


def write_catalog(catalog: Catalog, path: str | Path) -> None:
    """JSONL: a header line with the topic labels, then one item per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"topics": list(catalog.topic_labels)}) + "\n")
        for item in catalog.items:
            fh.write(json.dumps(item.to_dict()) + "\n")


def read_catalog(path: str | Path) -> Catalog:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty catalog file")
    header = json.loads(lines[0])
    items = [ContentItem.from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
    return Catalog(items, header["topics"])


# --- environments -------------------------------------------------------------


class SimEnv:
    """Stateful simulator session: one profile, one recent-items buffer, one stream."""

    def __init__(self, catalog: Catalog, params: SimParams, rng: np.random.Generator):
        self.catalog = catalog
        self.params = params
        self.rng = rng
        self.topic_labels = catalog.topic_labels
        self.profile = reset_profile(params, len(catalog.topic_labels))
        self.recent: deque[str] = deque(maxlen=max(1, params.no_repeat_window))
        self._obs: Observation | None = None
        self._step = 0

    def reset(self) -> Observation:
        self.profile = reset_profile(self.params, len(self.catalog.topic_labels))
        self.recent.clear()
        self._step = 0
        self._obs = self._serve()
        return self._obs

    def _serve(self) -> Observation:
        item = recommend(self.profile, self.catalog, self.params, self.rng, self.recent)
        if self.params.no_repeat_window > 0:
            self.recent.append(item.id)
        return Observation(self._step, item, action_mask(item, self.params, self.rng))

    def observe(self) -> Observation:
        if self._obs is None:
            return self.reset()
        return self._obs

    def act(self, action: Action) -> Observation:
        obs = self.observe()
        if action not in obs.mask:
            raise ValueError(f"action {action.value} is not valid at step {obs.step}")
        self.profile = apply_action(self.profile, obs.item, action, self.params)
        self._step += 1
        self._obs = self._serve()
        return self._obs


class TransitionEnv:
    """A frozen deterministic feed: the next item is a fixed function of (item, action).

    Small enough to enumerate, which lets a value-iteration oracle check
    what Q-learning converges to.
    """

    def __init__(self, items: Sequence[ContentItem], topic_labels: Sequence[str],
                 transitions: Mapping[str, Mapping[Action, str]], start: str):
        self.items = {it.id: it for it in items}
        self.topic_labels = tuple(topic_labels)
        self.transitions = {k: {Action(a): v for a, v in row.items()} for k, row in transitions.items()}
        self.start = start
        for src, row in self.transitions.items():
            if src not in self.items or any(dst not in self.items for dst in row.values()):
                raise ConfigError(f"transition row {src!r} refers to an unknown item")
        self._current = start
        self._step = 0

    def reset(self) -> Observation:
        self._current = self.start
        self._step = 0
        return self.observe()

    def observe(self) -> Observation:
        row = self.transitions[self._current]
        return Observation(self._step, self.items[self._current], ActionMask.of(row))

    def act(self, action: Action) -> Observation:
        self._current = self.transitions[self._current][action]
        self._step += 1
        return self.observe()


def sim_settings(simulator: Mapping[str, Any]) -> tuple[SimParams, Mapping[str, Any]]:
    """Split an experiment's ``simulator`` block into SimParams and catalog settings."""
    sim = dict(simulator)
    catalog_spec = sim.pop("catalog", {})
    return SimParams.from_dict(sim), catalog_spec


def build_catalog(catalog_spec: Mapping[str, Any], rng: np.random.Generator, base_dir: Path | None = None) -> Catalog:
    if "path" in catalog_spec:
        path = Path(catalog_spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_catalog(path)
    return generate_catalog(CatalogParams.from_dict(catalog_spec), rng)

