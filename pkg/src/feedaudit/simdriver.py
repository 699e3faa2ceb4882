"""A reference driver: serves the built-in simulator over the wire protocol on stdin/stdout.

    python -m feedaudit.simdriver --config configs/pets.json --seed 0

Confidences are computed driver-side with the config's classifier and the
seed's classifier stream, so a run through this driver sees the same
numbers as an in-process ``--sim`` run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import BinaryIO

from .classify import build_classifier, score_all_topics
from .harness import build_sim_env, streams
from .model import Action, ExperimentConfig, EnvironmentExhausted, Observation
from .protocol import ActionMsg, Content, End, Hello, Reset, decode_message, encode_message
from .storage import load_config


def serve(config: ExperimentConfig, reader: BinaryIO, writer: BinaryIO, base_dir: Path | None = None) -> int:
    """Run one session; returns the number of content messages sent."""
    env = build_sim_env(config, base_dir)
    classifier = build_classifier(config.classifier, env.topic_labels, base_dir)
    rng = streams(config.seed).classifier
    step = 0

    def send(msg) -> None:
        writer.write(encode_message(msg))
        writer.flush()

    def content(obs: Observation) -> None:
        nonlocal step
        t, s, _ = score_all_topics(obs.item, config.goal, classifier, rng)
        send(Content(
            step=step,
            id=obs.item.id,
            topic_conf=t,
            sent_conf=s,
            duration_s=obs.item.duration_s,
            valid_actions=tuple(a.value for a in obs.mask.actions),
        ))
        step += 1

    send(Hello(topics=env.topic_labels))
    content(env.reset())
    for line in reader:
        msg = decode_message(line)
        if isinstance(msg, End):
            break
        try:
            if isinstance(msg, ActionMsg):
                obs = env.act(Action(msg.action))
            elif isinstance(msg, Reset):
                obs = env.reset()
            else:
                send(End(f"unexpected {msg.type}"))
                break
        except EnvironmentExhausted as e:
            send(End(f"exhausted: {e}"))
            break
        content(obs)
    return step


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="feedaudit-simdriver", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None)
    args = p.parse_args(argv)
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    try:
        serve(config, sys.stdin.buffer, sys.stdout.buffer, args.config.parent)
    except BrokenPipeError:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
