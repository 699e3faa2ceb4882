"""Experiment orchestration: control baselines, driven runs, and ratio analysis."""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import EpsilonGreedy, Feed, Learning, QTable, ScrollOnly, Threshold, agent_step, on_goal
from .classify import build_classifier
from .model import (
    ConfigError,
    Dimensions,
    ExperimentConfig,
    FeedEnv,
    Goal,
    Mode,
    Pathway,
    Phase,
    StepRecord,
)
from .sim import SimEnv, build_catalog, sim_settings

log = logging.getLogger(__name__)


class AnalysisError(ValueError):
    """A pathway lacks what an analysis needs."""


@dataclass(frozen=True)
class Streams:
    catalog: np.random.Generator
    env: np.random.Generator
    classifier: np.random.Generator
    policy: np.random.Generator


def streams(seed: int) -> Streams:
    """Independent random streams for each consumer of randomness in a run."""
    children = np.random.SeedSequence(seed).spawn(4)
    return Streams(*(np.random.Generator(np.random.PCG64(c)) for c in children))


def build_sim_env(config: ExperimentConfig, base_dir: Path | None = None) -> SimEnv:
    """A fresh simulator for ``config.seed``.

    The catalog comes from its own stream, so a driven run and its control
    with the same seed see the same catalog.
    """
    rngs = streams(config.seed)
    params, catalog_spec = sim_settings(config.simulator)
    catalog = build_catalog(catalog_spec, rngs.catalog, base_dir)
    return SimEnv(catalog, params, rngs.env)


@dataclass(frozen=True)
class RunResult:
    pathway: Pathway
    q_final: QTable | None = None
    stop_step: int | None = None

    @property
    def goal_met(self) -> bool:
        return self.stop_step is not None


@dataclass(frozen=True)
class RatioCurve:
    steps: list[int]
    driven_cumulative: list[int]
    control_cumulative: list[int]
    ratio: list[float]
    phases: list[str]

    def __post_init__(self) -> None:
        n = len(self.steps)
        if not (len(self.driven_cumulative) == len(self.control_cumulative) == len(self.ratio) == len(self.phases) == n):
            raise ValueError("ratio curve series must have equal length")

    def __len__(self) -> int:
        return len(self.steps)

    def at(self, step: int) -> float:
        return self.ratio[self.steps.index(step)]


def _feed(config: ExperimentConfig, env: FeedEnv, base_dir: Path | None) -> tuple[Feed, np.random.Generator]:
    rngs = streams(config.seed)
    classifier = build_classifier(config.classifier, env.topic_labels, base_dir)
    env.reset()
    return Feed(env, classifier, config.goal, rngs.classifier), rngs.policy


def run_controlled(
    config: ExperimentConfig, env: FeedEnv, steps: int | None = None, base_dir: Path | None = None
) -> RunResult:
    """Scroll-only baseline on a fresh feed.

    Every record carries confidences for all topics the classifier knows, so
    one control can be re-scored for any goal topic later.
    """
    if steps is None:
        steps = config.horizon_T if config.mode is Mode.CONTROLLED else config.control_steps
    feed, rng = _feed(config, env, base_dir)
    q = QTable()
    records = [
        agent_step(feed, ScrollOnly(), q, config.goal, rng, step=t, phase=Phase.CONTROL, learning=None)
        for t in range(steps)
    ]
    return RunResult(Pathway(records, config.digest(), config.seed))


def at_goal(recent: Sequence[bool], needed: int, window: int) -> bool:
    """True once a full window exists and at least ``needed`` of its last steps were likes."""
    if needed > window:
        raise ValueError("needed cannot exceed window")
    if len(recent) < window:
        return False
    return sum(bool(x) for x in list(recent)[-window:]) >= needed


def policy_for(config: ExperimentConfig) -> tuple[EpsilonGreedy | Threshold, Learning | None]:
    if config.mode is Mode.STREAMLINED:
        return Threshold(config.like_threshold, config.dimensions), None
    if config.mode is Mode.RL:
        return EpsilonGreedy(config.epsilon), Learning(config.alpha, config.gamma)
    raise ConfigError(f"mode {config.mode.value!r} is not a driven mode")


def run_driven(
    config: ExperimentConfig, env: FeedEnv, q: QTable | None = None, base_dir: Path | None = None
) -> RunResult:
    """Training phase until the stopping rule fires (or the horizon), then skip-only testing.

    A positive action counts toward the stopping rule. In streamlined mode
    that is exactly a like.
    """
    policy, learning = policy_for(config)
    feed, rng = _feed(config, env, base_dir)
    q = q if q is not None else QTable()
    records: list[StepRecord] = []
    flags: deque[bool] = deque(maxlen=config.stop_window)
    stop_step = None
    for t in range(config.horizon_T):
        rec = agent_step(feed, policy, q, config.goal, rng, step=t, phase=Phase.TRAIN, learning=learning)
        records.append(rec)
        flags.append(rec.action.positive)
        if t + 1 >= config.min_train_steps and at_goal(flags, config.stop_likes_needed, config.stop_window):
            stop_step = t + 1
            break
    if stop_step is None:
        log.warning("goal not met within horizon %d (seed %d)", config.horizon_T, config.seed)
    start = len(records)
    for t in range(start, start + config.test_steps):
        records.append(agent_step(feed, ScrollOnly(), q, config.goal, rng, step=t, phase=Phase.TEST, learning=None))
    return RunResult(Pathway(records, config.digest(), config.seed), q, stop_step)


def run_experiment(config: ExperimentConfig, env: FeedEnv, base_dir: Path | None = None) -> RunResult:
    if config.mode is Mode.CONTROLLED:
        return run_controlled(config, env, base_dir=base_dir)
    return run_driven(config, env, base_dir=base_dir)


def _on_goal_flags(pathway: Pathway, goal: Goal, threshold: float, dimensions: Dimensions, who: str) -> list[bool]:
    flags = []
    for rec in pathway:
        topic = rec.score_for(goal.topic_label)
        if topic is None and dimensions is not Dimensions.SENTIMENT:
            raise AnalysisError(f"{who} pathway step {rec.step} has no score for topic {goal.topic_label!r}")
        flags.append(on_goal(topic or 0.0, rec.sent_conf, threshold, dimensions))
    return flags


def _cumulative(flags: Iterable[bool]) -> list[int]:
    out, total = [], 0
    for f in flags:
        total += bool(f)
        out.append(total)
    return out


def compare(
    driven: Pathway,
    control: Pathway,
    goal: Goal,
    threshold: float,
    dimensions: Dimensions = Dimensions.TOPIC,
) -> RatioCurve:
    """Cumulative on-goal counts for both pathways, aligned by step index.

    Curves cover ``min(len(driven), len(control))`` steps. The ratio uses
    ``max(1, control)`` as its denominator so early steps stay finite.
    """
    n = min(len(driven), len(control))
    d = _cumulative(_on_goal_flags(driven, goal, threshold, dimensions, "driven")[:n])
    c = _cumulative(_on_goal_flags(control, goal, threshold, dimensions, "control")[:n])
    return RatioCurve(
        steps=list(range(n)),
        driven_cumulative=d,
        control_cumulative=c,
        ratio=[x / max(1, y) for x, y in zip(d, c)],
        phases=[driven.records[i].phase.value for i in range(n)],
    )


def sentiment_post_process(pathway: Pathway, threshold: float) -> list[int]:
    """Cumulative count of steps whose negative-sentiment confidence exceeds ``threshold``."""
    return _cumulative(rec.sent_conf > threshold for rec in pathway)


def sentiment_compare(driven: Pathway, control: Pathway, threshold: float) -> RatioCurve:
    n = min(len(driven), len(control))
    d = sentiment_post_process(driven, threshold)[:n]
    c = sentiment_post_process(control, threshold)[:n]
    return RatioCurve(
        steps=list(range(n)),
        driven_cumulative=d,
        control_cumulative=c,
        ratio=[x / max(1, y) for x, y in zip(d, c)],
        phases=[driven.records[i].phase.value for i in range(n)],
    )


@dataclass(frozen=True)
class PairResult:
    seed: int
    driven: RunResult
    control: RunResult


def run_pair(config: ExperimentConfig, seed: int | None = None, base_dir: Path | None = None) -> PairResult:
    """A driven run and its matched control, both on fresh simulators with the same seed."""
    if seed is not None:
        config = config.with_seed(seed)
    driven = run_driven(config, build_sim_env(config, base_dir), base_dir=base_dir)
    control_cfg = config.as_controlled()
    control = run_controlled(control_cfg, build_sim_env(control_cfg, base_dir), base_dir=base_dir)
    return PairResult(config.seed, driven, control)


def run_seeds(
    config: ExperimentConfig,
    seeds: Iterable[int],
    workers: int = 1,
    base_dir: Path | None = None,
) -> list[PairResult]:
    """Run matched pairs for many seeds; each run owns its environment and streams."""
    seeds = list(seeds)
    if workers <= 1:
        return [run_pair(config, s, base_dir) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_pair, [config] * len(seeds), seeds, [base_dir] * len(seeds)))
