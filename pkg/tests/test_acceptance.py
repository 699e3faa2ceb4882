"""Acceptance suite: ten end-to-end criteria, each reported as one PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from feedaudit.agent import EpsilonGreedy, Feed, Learning, QTable, agent_step, q_update, reward
from feedaudit.classify import EvalCounts, Oracle, eval_classifier, eval_metrics
from feedaudit.cli import main
from feedaudit.harness import compare, run_seeds, sentiment_compare, streams
from feedaudit.model import Action, ActionMask, ContentItem, Goal, Phase, State, discretize, state_from_scores
from feedaudit.protocol import ActionMsg, Content, End, Hello, Reset, SessionError, decode_message, encode_message, validate_session
from feedaudit.sim import TransitionEnv
from feedaudit.storage import load_config

from conftest import CONFIGS, FIXTURES, VERDICTS
from oracles import nearest_level, proximity_reward, td_target, value_iteration
from protocol_cases import ACTION_NAMES, BAD_SESSIONS

SEEDS = range(10)


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


def test_criterion_1_reward_exactness():
    g = State(10, 10)
    got = [reward(State(10, 10), g), reward(State(0, 0), g), reward(State(8, 9), g)]
    want = [1.0, 0.0, 1 - math.sqrt(0.05) / math.sqrt(2)]
    err = max(abs(a - b) for a, b in zip(got, want))
    verdict(1, err <= 1e-9, f"reward examples, max error {err:.2e} (tol 1e-9)")


def test_criterion_2_q_update_exactness():
    s, s2 = State(3, 4), State(5, 6)
    q = QTable()
    q_update(q, s, Action.LIKE, 1.0, s2, 0.5, 0.9)
    e1 = abs(q[s, Action.LIKE] - 0.5)
    q = QTable()
    q[s, Action.WATCH] = 0.3
    q_update(q, s, Action.WATCH, 0.3, s2, 0.7, 0.0)
    e2 = abs(q[s, Action.WATCH] - 0.3)
    q = QTable()
    q[s, Action.SKIP], q[s2, Action.REPOST] = 0.5, 0.2
    q_update(q, s, Action.SKIP, 0.84189, s2, 0.1, 0.9)
    e3 = abs(q[s, Action.SKIP] - 0.552189)
    examples = max(e1, e2, e3)

    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10_000):
        q = QTable()
        q0 = rng.uniform(-10, 10)
        nxt = rng.uniform(-10, 10, 5)
        alpha, gamma, r = rng.uniform(1e-3, 1), rng.uniform(0, 1), rng.uniform(0, 1)
        q[s, Action.BOOKMARK] = q0
        for a, v in zip(Action, nxt):
            q[s2, a] = v
        q_update(q, s, Action.BOOKMARK, r, s2, alpha, gamma)
        lhs = q[s, Action.BOOKMARK] - q0
        worst = max(worst, abs(lhs - alpha * (r + gamma * nxt.max() - q0)))
    ok = examples <= 1e-12 and worst <= 1e-9
    verdict(2, ok, f"examples max error {examples:.1e} (tol 1e-12); 10,000 identity checks max error {worst:.1e} (tol 1e-9)")


def test_criterion_3_convergence_oracle():
    fx = json.loads((FIXTURES / "toy_grid.json").read_text())
    goal = Goal(round(fx["goal"]["topic"] * 10), round(fx["goal"]["sentiment"] * 10), fx["goal"]["topic_label"])
    trans = fx["transitions"]

    # oracle side: read rewards straight off the fixture's latent coordinates
    coords = {d["id"]: (d["topic_mixture"][0], d["latent_sentiment"]) for d in fx["items"]}
    rewards = {i: proximity_reward(c, (fx["goal"]["topic"], fx["goal"]["sentiment"])) for i, c in coords.items()}
    q_star = value_iteration(trans, rewards, 0.9)

    t0 = time.perf_counter()
    items = [ContentItem.from_dict(d) for d in fx["items"]]
    env = TransitionEnv(items, fx["topic_labels"], trans, fx["start"])
    env.reset()
    rngs = streams(0)
    feed = Feed(env, Oracle(tuple(fx["topic_labels"]), 0.0), goal, rngs.classifier)
    q = QTable()
    policy, learning = EpsilonGreedy(0.2), Learning(0.1, 0.9)
    for t in range(50_000):
        agent_step(feed, policy, q, goal, rngs.policy, step=t, phase=Phase.TRAIN, learning=learning)
    elapsed = time.perf_counter() - t0

    err, mismatches = 0.0, []
    for item_id, row in q_star.items():
        s = state_from_scores(*coords[item_id])
        mask = ActionMask.of(Action(a) for a in row)
        for a in mask.actions:
            err = max(err, abs(q[s, a] - row[a.value]))
        best = max(mask.actions, key=lambda a: row[a.value])
        if q.greedy(s, mask) is not best:
            mismatches.append(item_id)
    ok = err < 0.05 and not mismatches and elapsed < 30
    verdict(3, ok, f"max |Q - Q*| = {err:.4f} (tol 0.05), greedy mismatches {mismatches or 'none'}, {elapsed:.1f}s (limit 30s)")


@pytest.fixture(scope="module")
def topic_runs():
    cfg = load_config(CONFIGS / "pets.json")
    t0 = time.perf_counter()
    pairs = run_seeds(cfg, SEEDS)
    return cfg, pairs, time.perf_counter() - t0


def test_criterion_4_topic_drive_ratio(topic_runs):
    cfg, pairs, elapsed = topic_runs
    driven, control, per_seed = [], [], []
    for p in pairs:
        curve = compare(p.driven.pathway, p.control.pathway, cfg.goal, cfg.like_threshold)
        d, c = curve.driven_cumulative[149], curve.control_cumulative[149]
        driven.append(d)
        control.append(c)
        per_seed.append(d / max(1, c))
    mean_ratio = np.mean(driven) / max(1e-12, np.mean(control))
    ok = mean_ratio >= 2.0 and min(per_seed) >= 1.5 and elapsed < 60
    verdict(4, ok, f"mean ratio at step 150 = {mean_ratio:.2f} (need >= 2.0), "
                   f"worst seed {min(per_seed):.2f} (need >= 1.5), {elapsed:.1f}s (limit 60s)")


def _on_topic(pathway, label, threshold, lo, hi):
    return sum(rec.score_for(label) > threshold for rec in pathway.records[lo:hi])


def test_criterion_5_testing_phase_persistence(topic_runs):
    cfg, pairs, _ = topic_runs
    label, thr = cfg.goal.topic_label, cfg.like_threshold
    good, rates = 0, []
    for p in pairs:
        lo = len(p.driven.pathway) - cfg.test_steps
        hi = len(p.driven.pathway)
        d = _on_topic(p.driven.pathway, label, thr, lo, hi) / cfg.test_steps
        ctl = p.control.pathway.records[lo:hi]
        c = _on_topic(p.control.pathway, label, thr, lo, hi) / max(1, len(ctl))
        rate = d / c if c else math.inf
        rates.append(rate)
        good += rate >= 1.5
    shown = ", ".join(f"{r:.2f}" for r in rates)
    verdict(5, good >= 8, f"{good}/10 seeds hold >= 1.5x control during testing (need 8); ratios [{shown}]")


def test_criterion_6_two_dimension_drive():
    cfg = load_config(CONFIGS / "sad_mental_health.json")
    t0 = time.perf_counter()
    pairs = run_seeds(cfg, SEEDS)
    joint_d, joint_c, sent_d, sent_c = [], [], [], []
    for p in pairs:
        both = compare(p.driven.pathway, p.control.pathway, cfg.goal, cfg.like_threshold, cfg.dimensions)
        sent = sentiment_compare(p.driven.pathway, p.control.pathway, cfg.like_threshold)
        joint_d.append(both.driven_cumulative[-1])
        joint_c.append(both.control_cumulative[-1])
        sent_d.append(sent.driven_cumulative[-1])
        sent_c.append(sent.control_cumulative[-1])
    joint = np.mean(joint_d) / max(1e-12, np.mean(joint_c))
    sent = np.mean(sent_d) / max(1e-12, np.mean(sent_c))
    elapsed = time.perf_counter() - t0
    ok = joint >= 1.5 and sent >= 1.4 and elapsed < 60
    verdict(6, ok, f"joint topic+negative ratio {joint:.2f} (need >= 1.5), "
                   f"sentiment-only ratio {sent:.2f} (need >= 1.4), {elapsed:.1f}s")


def test_criterion_7_discretization():
    example = state_from_scores(0.06, 0.07) == State(1, 1)
    bad = [k for k in range(10_001) if discretize(k / 10_000) != nearest_level(k / 10_000)]
    verdict(7, example and not bad, f"(0.06, 0.07) -> <0.1, 0.1> {'ok' if example else 'wrong'}; "
                                    f"{10_001 - len(bad)}/10,001 grid points match the brute-force scan")


def test_criterion_8_determinism(tmp_path, capsys):
    cfg = CONFIGS / "pets.json"
    outputs = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        codes = [
            main(["run", "--sim", "--config", str(cfg), "--seed", "3", "--out", str(d / "driven.jsonl")]),
            main(["control", "--config", str(cfg), "--seed", "3", "--out", str(d / "control.jsonl")]),
            main(["analyze", "--driven", str(d / "driven.jsonl"), "--control", str(d / "control.jsonl"),
                  "--topic", "pets", "--threshold", "0.5", "--out", str(d / "report.csv")]),
        ]
        assert codes == [0, 0, 0]
        outputs.append([(d / f).read_bytes() for f in ("driven.jsonl", "control.jsonl", "report.csv")])
    capsys.readouterr()
    same = [a == b for a, b in zip(*outputs)]
    verdict(8, all(same), f"run/control/analyze byte-identical across two executions: {same}")


def _random_message(rng):
    kind = rng.integers(5)
    text = "".join(chr(c) for c in rng.integers(32, 0x2FFF, rng.integers(0, 40)))
    if kind == 0:
        return Hello(1, tuple(text[i:i + 5] for i in range(0, len(text), 5)))
    if kind == 1:
        scored = bool(rng.integers(2))
        valid = None
        if rng.integers(2):
            picks = [a for a in ACTION_NAMES[:4] if rng.integers(2)]
            valid = (*picks, "skip")
        return Content(
            step=int(rng.integers(0, 2**31)),
            id=text[:10],
            topic_conf=float(rng.random()) if scored else None,
            sent_conf=float(rng.random()) if scored else None,
            text=text if (not scored or rng.integers(2)) else None,
            duration_s=float(rng.uniform(0, 600)) if rng.integers(2) else None,
            valid_actions=valid,
        )
    if kind == 2:
        return ActionMsg(int(rng.integers(0, 2**31)), ACTION_NAMES[rng.integers(5)])
    if kind == 3:
        return Reset()
    return End(text)


def test_criterion_9_protocol_robustness():
    rng = np.random.default_rng(9)
    round_trips = 0
    for _ in range(1_000):
        msg = _random_message(rng)
        round_trips += decode_message(encode_message(msg)) == msg
    rejected = 0
    for name, script, position, step, fragment in BAD_SESSIONS:
        try:
            validate_session(script)
        except SessionError as e:
            rejected += (e.position, e.step) == (position, step) and fragment in str(e)
    ok = round_trips == 1_000 and rejected == len(BAD_SESSIONS) == 20
    verdict(9, ok, f"{round_trips}/1,000 round trips; {rejected}/20 bad sessions rejected at the expected step")


def test_criterion_10_metrics():
    got = eval_metrics(EvalCounts(tp=7, fp=3, tn=10, fn=1))
    err = max(abs(a - b) for a, b in zip(got, (0.7, 0.875, 0.80952, 0.77777)))

    labeled = []
    for k in range(126):
        on_topic, negative = k < 63, k % 2 == 0
        mix = (0.85, 0.15) if on_topic else (0.1, 0.9)
        item = ContentItem(f"v{k}", mix, 0.9 if negative else 0.2, 0.5)
        labeled.append((item, on_topic, negative))
    kind = Oracle(("mental health", "other"), 0.0)
    topic, sent = eval_classifier(labeled, Goal(10, 10, "mental health"), kind, 0.5, np.random.default_rng(0))
    acc_t, acc_s = eval_metrics(topic)[2], eval_metrics(sent)[2]
    ok = err <= 1e-5 and acc_t == 1.0 and acc_s == 1.0
    verdict(10, ok, f"hand example max error {err:.1e} (tol 1e-5); 63/63 set accuracy topic {acc_t}, sentiment {acc_s}")
