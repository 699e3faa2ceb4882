"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 protocol or driver failure.
Errors are printed to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .classify import eval_classifier, load_lexicon
from .driver import connect
from .harness import AnalysisError, build_sim_env, compare, run_controlled, run_driven, sentiment_compare, streams
from .model import (
    ConfigError,
    Dimensions,
    EnvironmentExhausted,
    ExperimentConfig,
    Goal,
    InputDomainError,
    Mode,
)
from .protocol import ProtocolError
from .sim import CatalogParams, generate_catalog, write_catalog
from .storage import (
    FormatVersionError,
    IntegrityError,
    dump_curve,
    dump_metrics,
    load_config,
    read_labeled,
    read_pathway,
    write_pathway,
    write_qtable,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_PROTOCOL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _diag(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def _write(path: str, text: str) -> None:
    Path(path).write_bytes(text.encode("utf-8"))


def _config(args) -> tuple[ExperimentConfig, Path]:
    path = Path(args.config)
    config = load_config(path)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config, path.parent


def _env(config: ExperimentConfig, args, base_dir: Path):
    address = getattr(args, "driver", None) or (None if getattr(args, "sim", False) else config.driver)
    if address:
        return connect(address)
    return build_sim_env(config, base_dir)


def _summary(**fields) -> None:
    print(json.dumps(fields, sort_keys=True))


def cmd_run(args) -> int:
    config, base = _config(args)
    if config.mode is Mode.CONTROLLED:
        raise ConfigError("run needs a streamlined or rl config; use the control command for baselines")
    env = _env(config, args, base)
    try:
        result = run_driven(config, env, base_dir=base)
    finally:
        getattr(env, "close", lambda: None)()
    write_pathway(result.pathway, args.out)
    if args.qtable:
        write_qtable(result.q_final, args.qtable)
    _summary(records=len(result.pathway), seed=config.seed, stop_step=result.stop_step)
    return EXIT_OK


def cmd_control(args) -> int:
    config, base = _config(args)
    config = config.as_controlled()
    env = _env(config, args, base)
    try:
        result = run_controlled(config, env, base_dir=base)
    finally:
        getattr(env, "close", lambda: None)()
    write_pathway(result.pathway, args.out)
    _summary(records=len(result.pathway), seed=config.seed)
    return EXIT_OK


def cmd_analyze(args) -> int:
    driven = read_pathway(args.driven)
    control = read_pathway(args.control)
    if args.sentiment_only:
        curve = sentiment_compare(driven, control, args.threshold)
    else:
        goal = Goal(10, 10, args.topic)
        curve = compare(driven, control, goal, args.threshold, Dimensions(args.dimensions))
    _write(args.out, dump_curve(curve))
    final = curve.ratio[-1] if len(curve) else None
    _summary(rows=len(curve), final_ratio=final)
    return EXIT_OK


def cmd_eval_classifier(args) -> int:
    kind = load_lexicon(args.lexicon)
    topic = args.topic or next(iter(kind.topics), None)
    if topic is None:
        raise ConfigError("lexicon has no topics")
    labeled = read_labeled(args.dataset)
    t, s = eval_classifier(labeled, Goal(10, 10, topic), kind, args.threshold)
    _write(args.out, dump_metrics([("topic", t), ("sentiment", s)]))
    _summary(items=len(labeled), topic=topic)
    return EXIT_OK


def cmd_gen_catalog(args) -> int:
    params = CatalogParams.from_dict(json.loads(Path(args.params).read_text(encoding="utf-8")))
    catalog = generate_catalog(params, streams(args.seed).catalog)
    write_catalog(catalog, args.out)
    _summary(items=len(catalog), topics=list(catalog.topic_labels))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="feedaudit", description="Audit feed recommenders with scripted sock-puppet users.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="driven run (streamlined or rl) plus its testing phase")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True, help="pathway JSONL to write")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--driver", help="exec:<cmd> or tcp://host:port")
    src.add_argument("--sim", action="store_true", help="use the built-in simulator (default)")
    run.add_argument("--qtable", help="also write the final Q-table as JSON")
    run.set_defaults(func=cmd_run)

    ctl = sub.add_parser("control", help="scroll-only baseline")
    ctl.add_argument("--config", required=True)
    ctl.add_argument("--seed", type=int)
    ctl.add_argument("--out", required=True)
    src = ctl.add_mutually_exclusive_group()
    src.add_argument("--driver")
    src.add_argument("--sim", action="store_true")
    ctl.set_defaults(func=cmd_control)

    an = sub.add_parser("analyze", help="ratio-to-control report as CSV")
    an.add_argument("--driven", required=True)
    an.add_argument("--control", required=True)
    an.add_argument("--topic", required=True)
    an.add_argument("--threshold", type=float, required=True)
    an.add_argument("--out", required=True)
    an.add_argument("--sentiment-only", action="store_true")
    an.add_argument("--dimensions", choices=[d.value for d in Dimensions], default=Dimensions.TOPIC.value)
    an.set_defaults(func=cmd_analyze)

    ev = sub.add_parser("eval-classifier", help="precision/recall/accuracy/F1 of a keyword lexicon")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--lexicon", required=True)
    ev.add_argument("--threshold", type=float, required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--topic", help="lexicon topic to score (default: the first one)")
    ev.set_defaults(func=cmd_eval_classifier)

    gc = sub.add_parser("gen-catalog", help="generate a simulator catalog")
    gc.add_argument("--params", required=True)
    gc.add_argument("--seed", type=int, required=True)
    gc.add_argument("--out", required=True)
    gc.set_defaults(func=cmd_gen_catalog)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _diag("UsageError", str(e))
        return EXIT_USAGE
    try:
        return args.func(args)
    except ProtocolError as e:
        _diag(type(e).__name__, str(e), **({"step": e.step} if hasattr(e, "step") else {}))
        return EXIT_PROTOCOL
    except IntegrityError as e:
        _diag("IntegrityError", str(e), last_good_step=e.last_good_step)
        return EXIT_RUNTIME
    except (ConfigError, InputDomainError, AnalysisError, EnvironmentExhausted, FormatVersionError, OSError, ValueError) as e:
        _diag(type(e).__name__, str(e))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
