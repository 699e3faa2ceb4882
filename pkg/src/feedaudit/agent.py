"""Proximity reward, tabular Q-learning, action policies and the per-step loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .classify import ClassifierKind, Keyword, score_all_topics
from .model import (
    ACTIONS,
    N_ACTIONS,
    N_STATES,
    Action,
    ActionMask,
    ConfigError,
    ContentItem,
    Dimensions,
    FeedEnv,
    Goal,
    Observation,
    Phase,
    State,
    StepRecord,
    canon_float,
    state_from_scores,
)

D_MAX = math.sqrt(2.0)


def reward(next_state: State, goal: Goal | State) -> float:
    """1 minus the Euclidean distance to the goal, normalized by the grid diagonal."""
    dt = (next_state.topic - goal.topic) / 10
    ds = (next_state.sentiment - goal.sentiment) / 10
    return max(0.0, 1.0 - math.hypot(dt, ds) / D_MAX)


class QTable:
    """State-action values over the 121-state grid, with visit counts."""

    def __init__(self) -> None:
        self.values = np.zeros((N_STATES, N_ACTIONS))
        self.visits = np.zeros((N_STATES, N_ACTIONS), dtype=np.int64)

    def __getitem__(self, key: tuple[State, Action]) -> float:
        s, a = key
        return float(self.values[s.index, a.index])

    def __setitem__(self, key: tuple[State, Action], value: float) -> None:
        s, a = key
        self.values[s.index, a.index] = value

    def best_value(self, s: State, mask: ActionMask | None = None) -> float:
        row = self.values[s.index]
        if mask is None:
            return float(row.max())
        return float(max(row[a.index] for a in mask.actions))

    def greedy(self, s: State, mask: ActionMask | None = None) -> Action:
        # max() keeps the first maximum, i.e. the earliest action in ACTIONS order.
        candidates = mask.actions if mask is not None else list(ACTIONS)
        return max(candidates, key=lambda a: self.values[s.index, a.index])

    def copy(self) -> QTable:
        q = QTable()
        q.values = self.values.copy()
        q.visits = self.visits.copy()
        return q

    def to_dict(self) -> dict[str, Any]:
        states = {}
        for s in State.all():
            if self.visits[s.index].any():
                states[f"{s.topic / 10:.1f},{s.sentiment / 10:.1f}"] = {
                    "values": {a.value: canon_float(self.values[s.index, a.index]) for a in ACTIONS},
                    "visits": {a.value: int(self.visits[s.index, a.index]) for a in ACTIONS},
                }
        return {"actions": [a.value for a in ACTIONS], "states": states}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> QTable:
        q = cls()
        for key, entry in d["states"].items():
            t, s = (float(x) for x in key.split(","))
            state = state_from_scores(t, s)
            for name, v in entry["values"].items():
                q.values[state.index, Action(name).index] = v
            for name, n in entry.get("visits", {}).items():
                q.visits[state.index, Action(name).index] = n
        return q


def q_update(
    q: QTable,
    s: State,
    a: Action,
    r: float,
    s_next: State,
    alpha: float,
    gamma: float,
    mask: ActionMask | None = None,
) -> QTable:
    """One temporal-difference step, in place; returns ``q``.

    ``mask`` restricts the bootstrap max to the actions valid in ``s_next``.
    """
    if not math.isfinite(r):
        raise ArithmeticError(f"non-finite reward {r!r}")
    if not 0.0 < alpha <= 1.0 or not 0.0 <= gamma <= 1.0:
        raise ValueError("alpha must lie in (0, 1] and gamma in [0, 1]")
    old = q.values[s.index, a.index]
    target = r + gamma * q.best_value(s_next, mask)
    q.values[s.index, a.index] = old + alpha * (target - old)
    q.visits[s.index, a.index] += 1
    return q


@dataclass(frozen=True)
class EpsilonGreedy:
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in (0, 1]")


@dataclass(frozen=True)
class Threshold:
    like_threshold: float = 0.5
    dimensions: Dimensions = Dimensions.TOPIC

    def __post_init__(self) -> None:
        if not 0.0 < self.like_threshold < 1.0:
            raise ConfigError("like_threshold must lie in (0, 1)")

    def on_goal(self, topic_conf: float, sent_conf: float) -> bool:
        return on_goal(topic_conf, sent_conf, self.like_threshold, self.dimensions)


@dataclass(frozen=True)
class ScrollOnly:
    pass


Policy = EpsilonGreedy | Threshold | ScrollOnly


def on_goal(topic_conf: float, sent_conf: float, threshold: float, dimensions: Dimensions) -> bool:
    if dimensions is Dimensions.TOPIC:
        return topic_conf > threshold
    if dimensions is Dimensions.SENTIMENT:
        return sent_conf > threshold
    return topic_conf > threshold and sent_conf > threshold


def select_action(
    policy: Policy,
    q: QTable,
    s: State,
    scores: tuple[float, float],
    mask: ActionMask,
    rng: np.random.Generator,
) -> Action:
    if isinstance(policy, ScrollOnly):
        return Action.SKIP
    if isinstance(policy, Threshold):
        if policy.on_goal(*scores) and Action.LIKE in mask:
            return Action.LIKE
        return Action.SKIP
    if isinstance(policy, EpsilonGreedy):
        valid = mask.actions
        # The explore draw is always consumed; the index draw only when exploring.
        if rng.random() < policy.epsilon:
            return valid[int(rng.integers(len(valid)))]
        return q.greedy(s, mask)
    raise TypeError(f"not a policy: {policy!r}")


@dataclass(frozen=True, slots=True)
class Scored:
    """An observation together with the classifier's reading of it."""

    obs: Observation
    topic_conf: float
    sent_conf: float
    topic_scores: Mapping[str, float]

    @property
    def state(self) -> State:
        return state_from_scores(self.topic_conf, self.sent_conf)


class Feed:
    """An environment seen through a classifier.

    Each item is scored exactly once, when it first comes on screen, so the
    state used to pick an action is the same state the previous step was
    rewarded for reaching.
    """

    def __init__(self, env: FeedEnv, classifier: ClassifierKind, goal: Goal, rng: np.random.Generator):
        self.env = env
        self.classifier = classifier
        self.goal = goal
        self.rng = rng
        self.current = self._score(env.observe())

    def _score(self, obs: Observation) -> Scored:
        if obs.scores is not None:
            t, s = obs.scores
            scores = {self.goal.topic_label: t}
        elif isinstance(self.classifier, Keyword) or obs.item.topic_mixture:
            t, s, scores = score_all_topics(obs.item, self.goal, self.classifier, self.rng)
        else:
            raise ConfigError(f"step {obs.step}: content arrived without scores, text or latent attributes")
        scores = {k: canon_float(v) for k, v in scores.items()}
        return Scored(obs, canon_float(t), canon_float(s), scores)

    def act(self, action: Action) -> Scored:
        self.current = self._score(self.env.act(action))
        return self.current

    @property
    def item(self) -> ContentItem:
        return self.current.obs.item


@dataclass(frozen=True)
class Learning:
    alpha: float = 0.1
    gamma: float = 0.9


def agent_step(
    feed: Feed,
    policy: Policy,
    q: QTable,
    goal: Goal,
    rng: np.random.Generator,
    *,
    step: int,
    phase: Phase,
    learning: Learning | None = Learning(),
) -> StepRecord:
    """Act on the item on screen, move to the next one, and record the step.

    The reward is computed from the *next* item's state and credited to the
    action just taken. Q is updated only for epsilon-greedy policies and only
    when ``learning`` is given.
    """
    cur = feed.current
    s = cur.state
    action = select_action(policy, q, s, (cur.topic_conf, cur.sent_conf), cur.obs.mask, rng)
    nxt = feed.act(action)
    r = reward(nxt.state, goal)
    if learning is not None and isinstance(policy, EpsilonGreedy):
        q_update(q, s, action, r, nxt.state, learning.alpha, learning.gamma, nxt.obs.mask)
    return StepRecord(
        step=step,
        content_id=cur.obs.item.id,
        topic_conf=cur.topic_conf,
        sent_conf=cur.sent_conf,
        state=s,
        action=action,
        reward=r,
        phase=phase,
        topic_scores=cur.topic_scores,
    )
