"""Shared domain types: grid states, actions, goals, content, pathways, configs.

Scores live on an 11-level grid (0.0, 0.1, ..., 1.0) stored as integer levels.
Sentiment is encoded as 0 = positive/happy, 1 = negative/sad; this is fixed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Any, Iterable, Mapping, Protocol

N_LEVELS = 11
N_STATES = N_LEVELS * N_LEVELS
SIG_DIGITS = 9


class InputDomainError(ValueError):
    """A value fell outside the domain an operation accepts."""


class ConfigError(ValueError):
    """An experiment or component configuration is invalid."""


def canon_float(x: float) -> float:
    """Round ``x`` to the 9-significant-digit value used in every file format."""
    x = float(x)
    if not math.isfinite(x):
        raise InputDomainError(f"non-finite value {x!r}")
    return float(format(x, f".{SIG_DIGITS}g"))


def discretize(score: float) -> int:
    """Return the grid level (0..10) nearest to ``score``; midpoints round up.

    Midpoints are decided on the shortest decimal form of the float, so
    ``0.15`` maps to level 2 even though the binary double sits just below it.
    """
    score = float(score)
    if not (0.0 <= score <= 1.0):
        raise InputDomainError(f"score {score!r} outside [0, 1]")
    tenths = Decimal(repr(score)) * 10
    return int(tenths.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _check_level(level: int, what: str) -> int:
    if isinstance(level, bool) or not isinstance(level, int):
        raise InputDomainError(f"{what} level must be an int, got {level!r}")
    if not 0 <= level < N_LEVELS:
        raise InputDomainError(f"{what} level {level} outside 0..10")
    return level


@dataclass(frozen=True, slots=True, order=True)
class State:
    """Discretized <topic, sentiment> pair; fields are integer grid levels."""

    topic: int
    sentiment: int

    def __post_init__(self) -> None:
        _check_level(self.topic, "topic")
        _check_level(self.sentiment, "sentiment")

    @property
    def point(self) -> tuple[float, float]:
        return self.topic / 10, self.sentiment / 10

    @property
    def index(self) -> int:
        return self.topic * N_LEVELS + self.sentiment

    @classmethod
    def from_index(cls, index: int) -> State:
        return cls(*divmod(index, N_LEVELS))

    @classmethod
    def all(cls) -> list[State]:
        return [cls.from_index(i) for i in range(N_STATES)]

    def __str__(self) -> str:
        return f"<{self.topic / 10:.1f}, {self.sentiment / 10:.1f}>"


def state_from_scores(topic_conf: float, sent_conf: float) -> State:
    return State(discretize(topic_conf), discretize(sent_conf))


@dataclass(frozen=True, slots=True)
class Goal:
    """Target state plus the label of the topic being audited."""

    topic: int
    sentiment: int
    topic_label: str

    def __post_init__(self) -> None:
        _check_level(self.topic, "goal topic")
        _check_level(self.sentiment, "goal sentiment")

    @property
    def state(self) -> State:
        return State(self.topic, self.sentiment)

    @classmethod
    def from_scores(cls, topic: float, sentiment: float, topic_label: str) -> Goal:
        return cls(discretize(topic), discretize(sentiment), topic_label)


class Action(str, Enum):
    # Declaration order is the argmax tie-break order.
    LIKE = "like"
    WATCH = "watch"
    BOOKMARK = "bookmark"
    REPOST = "repost"
    SKIP = "skip"

    @property
    def positive(self) -> bool:
        return self is not Action.SKIP

    @property
    def index(self) -> int:
        return ACTIONS.index(self)


ACTIONS: tuple[Action, ...] = tuple(Action)
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True, slots=True)
class ActionMask:
    """Per-action validity for one step. Skip can never be masked out."""

    valid: tuple[bool, ...] = (True,) * N_ACTIONS

    def __post_init__(self) -> None:
        if len(self.valid) != N_ACTIONS:
            raise InputDomainError(f"mask needs {N_ACTIONS} entries")
        if not self.valid[Action.SKIP.index]:
            raise InputDomainError("skip must always be valid")

    def __contains__(self, action: Action) -> bool:
        return self.valid[action.index]

    @property
    def actions(self) -> list[Action]:
        return [a for a, ok in zip(ACTIONS, self.valid) if ok]

    @classmethod
    def all_valid(cls) -> ActionMask:
        return cls()

    @classmethod
    def of(cls, actions: Iterable[Action]) -> ActionMask:
        allowed = set(actions) | {Action.SKIP}
        return cls(tuple(a in allowed for a in ACTIONS))


@dataclass(frozen=True, slots=True)
class ContentItem:
    id: str
    topic_mixture: tuple[float, ...]
    latent_sentiment: float
    popularity: float
    duration_s: float = 0.0
    text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "topic_mixture", tuple(float(v) for v in self.topic_mixture))
        for v in self.topic_mixture:
            if not 0.0 <= v <= 1.0:
                raise InputDomainError(f"{self.id}: mixture entry {v} outside [0, 1]")
        if sum(self.topic_mixture) > 1.0 + 1e-9:
            raise InputDomainError(f"{self.id}: topic mixture sums above 1")
        for name in ("latent_sentiment", "popularity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputDomainError(f"{self.id}: {name} {v} outside [0, 1]")
        if not self.duration_s >= 0.0:
            raise InputDomainError(f"{self.id}: negative duration")

    def to_dict(self) -> dict[str, Any]:
        d = {
            "id": self.id,
            "topic_mixture": list(self.topic_mixture),
            "latent_sentiment": self.latent_sentiment,
            "popularity": self.popularity,
            "duration_s": self.duration_s,
        }
        if self.text is not None:
            d["text"] = self.text
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ContentItem:
        return cls(
            id=str(d["id"]),
            topic_mixture=tuple(d.get("topic_mixture", ())),
            latent_sentiment=float(d.get("latent_sentiment", 0.0)),
            popularity=float(d.get("popularity", 0.0)),
            duration_s=float(d.get("duration_s", 0.0)),
            text=d.get("text"),
        )


class Phase(str, Enum):
    TRAIN = "train"
    TEST = "test"
    CONTROL = "control"


@dataclass(frozen=True, slots=True)
class StepRecord:
    """One observed item, the action taken on it and the reward it earned.

    ``topic_scores`` holds per-label topic confidences for every topic the
    classifier could score, so a pathway can be re-analysed for other topics.
    Reals are stored at 9 significant digits.
    """

    step: int
    content_id: str
    topic_conf: float
    sent_conf: float
    state: State
    action: Action
    reward: float
    phase: Phase
    topic_scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.step < 0:
            raise InputDomainError("step must be >= 0")
        for name in ("topic_conf", "sent_conf", "reward"):
            v = canon_float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise InputDomainError(f"{name} {v} outside [0, 1]")
            object.__setattr__(self, name, v)
        scores = {k: canon_float(self.topic_scores[k]) for k in sorted(self.topic_scores)}
        object.__setattr__(self, "topic_scores", scores)
        if self.state != state_from_scores(self.topic_conf, self.sent_conf):
            raise InputDomainError(
                f"step {self.step}: state {self.state} is not the discretization of "
                f"({self.topic_conf}, {self.sent_conf})"
            )

    def score_for(self, label: str) -> float | None:
        return self.topic_scores.get(label)


@dataclass(frozen=True, slots=True)
class Pathway:
    records: tuple[StepRecord, ...]
    config_digest: str
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        if not 0 <= self.seed < 2**64:
            raise InputDomainError("seed must be an unsigned 64-bit integer")
        for i, rec in enumerate(self.records):
            if rec.step != i:
                raise InputDomainError(f"record {i} has step {rec.step}; steps must run 0, 1, 2, ...")
        phases = {rec.phase for rec in self.records}
        if Phase.CONTROL in phases and len(phases) > 1:
            raise InputDomainError("control records cannot be mixed with train/test records")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def phase_slice(self, phase: Phase) -> list[StepRecord]:
        return [r for r in self.records if r.phase is phase]


class Mode(str, Enum):
    RL = "rl"
    STREAMLINED = "streamlined"
    CONTROLLED = "controlled"


class Dimensions(str, Enum):
    TOPIC = "topic"
    SENTIMENT = "sentiment"
    BOTH = "both"


DEFAULT_HORIZON = {Mode.RL: 1000, Mode.STREAMLINED: 1000, Mode.CONTROLLED: 200}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run, apart from the seed.

    ``classifier`` and ``simulator`` stay as plain mappings here; the
    classify and sim modules parse them.
    """

    mode: Mode
    goal: Goal
    horizon_T: int | None = None
    min_train_steps: int = 100
    stop_likes_needed: int = 4
    stop_window: int = 10
    test_steps: int = 50
    control_steps: int = 200
    like_threshold: float = 0.5
    dimensions: Dimensions = Dimensions.TOPIC
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    seed: int = 0
    classifier: Mapping[str, Any] = field(default_factory=lambda: {"kind": "oracle", "noise_sigma": 0.05})
    simulator: Mapping[str, Any] = field(default_factory=dict)
    driver: str | None = None

    def __post_init__(self) -> None:
        if self.horizon_T is None:
            object.__setattr__(self, "horizon_T", DEFAULT_HORIZON[self.mode])
        if self.horizon_T < 1:
            raise ConfigError("horizon_T must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in (0, 1]")
        if not 0.0 < self.like_threshold < 1.0:
            raise ConfigError("like_threshold must lie in (0, 1)")
        if not 0 < self.stop_likes_needed <= self.stop_window:
            raise ConfigError("stop_likes_needed must be in 1..stop_window")
        if self.min_train_steps < 0 or self.test_steps < 0 or self.control_steps < 1:
            raise ConfigError("step counts must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["dimensions"] = self.dimensions.value
        d["goal"] = {
            "topic": self.goal.topic / 10,
            "sentiment": self.goal.sentiment / 10,
            "topic_label": self.goal.topic_label,
        }
        d["classifier"] = dict(self.classifier)
        d["simulator"] = dict(self.simulator)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ExperimentConfig:
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            g = d["goal"]
            d["goal"] = Goal.from_scores(g.get("topic", 1.0), g.get("sentiment", 1.0), g["topic_label"])
            d["mode"] = Mode(d["mode"])
            if "dimensions" in d:
                d["dimensions"] = Dimensions(d["dimensions"])
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad config: {e}") from e
        return cls(**d)

    def digest(self) -> str:
        # The seed is excluded so pathways from one config share a digest.
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed)

    def as_controlled(self) -> ExperimentConfig:
        """The matched scroll-only baseline for this experiment."""
        return replace(self, mode=Mode.CONTROLLED, horizon_T=self.control_steps)



class EnvironmentExhausted(RuntimeError):
    """The environment has no further content to serve."""


@dataclass(frozen=True, slots=True)
class Observation:
    """The item currently on screen.

    ``scores`` is set when the environment supplies (topic, sentiment)
    confidences itself, as an external driver may.
    """

    step: int
    item: ContentItem
    mask: ActionMask = ActionMask()
    scores: tuple[float, float] | None = None


class FeedEnv(Protocol):
    """What the agent needs from a feed: look at the current item, act, move on."""

    topic_labels: tuple[str, ...]

    def reset(self) -> Observation: ...

    def observe(self) -> Observation: ...

    def act(self, action: Action) -> Observation: ...
