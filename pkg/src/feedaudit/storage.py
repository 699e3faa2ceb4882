"""File formats: experiment configs, pathway JSONL, ratio-curve CSV, Q-table snapshots.

All writers are byte-deterministic: fixed key order, reals at 9 significant
digits, LF line endings, no timestamps.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, TextIO

from .agent import QTable
from .classify import EvalCounts, eval_metrics
from .harness import RatioCurve
from .model import (
    Action,
    ConfigError,
    ContentItem,
    ExperimentConfig,
    InputDomainError,
    Pathway,
    Phase,
    StepRecord,
    canon_float,
    state_from_scores,
)

SCHEMA_VERSION = 1
CSV_HEADER = ("step", "driven_cum", "control_cum", "ratio", "phase")


class FormatVersionError(ValueError):
    """A file was written with a schema version this build cannot read."""


class IntegrityError(ValueError):
    """A file is truncated or corrupt. ``last_good_step`` is the last intact record's step (or None)."""

    def __init__(self, message: str, last_good_step: int | None):
        super().__init__(f"{message} (last good step: {last_good_step})")
        self.last_good_step = last_good_step


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def fmt_real(x: float) -> str:
    return format(canon_float(x), ".9g")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(data)


def record_to_dict(rec: StepRecord) -> dict[str, Any]:
    return {
        "step": rec.step,
        "content_id": rec.content_id,
        "topic_conf": rec.topic_conf,
        "sent_conf": rec.sent_conf,
        "state": [rec.state.topic / 10, rec.state.sentiment / 10],
        "action": rec.action.value,
        "reward": rec.reward,
        "phase": rec.phase.value,
        "topic_scores": dict(rec.topic_scores),
    }


def record_from_dict(d: Mapping[str, Any]) -> StepRecord:
    t, s = d["state"]
    return StepRecord(
        step=int(d["step"]),
        content_id=str(d["content_id"]),
        topic_conf=float(d["topic_conf"]),
        sent_conf=float(d["sent_conf"]),
        state=state_from_scores(t, s),
        action=Action(d["action"]),
        reward=float(d["reward"]),
        phase=Phase(d["phase"]),
        topic_scores={str(k): float(v) for k, v in d.get("topic_scores", {}).items()},
    )


def dump_pathway(pathway: Pathway) -> str:
    """The JSONL text of a pathway: a header line, then one record per line.

    The header also carries the record count so a file cut at a line
    boundary is still detected as truncated.
    """
    header = {
        "schema_version": SCHEMA_VERSION,
        "config_digest": pathway.config_digest,
        "seed": pathway.seed,
        "n_records": len(pathway),
    }
    lines = [_dumps(header)] + [_dumps(record_to_dict(r)) for r in pathway]
    return "\n".join(lines) + "\n"


def write_pathway(pathway: Pathway, destination: str | Path | TextIO) -> None:
    text = dump_pathway(pathway)
    if isinstance(destination, (str, Path)):
        Path(destination).write_bytes(text.encode("utf-8"))
    else:
        destination.write(text)


def parse_pathway(text: str) -> Pathway:
    if not text:
        raise IntegrityError("empty pathway file", None)
    lines = text.split("\n")
    complete = text.endswith("\n")
    if complete:
        lines.pop()
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise IntegrityError("unreadable header line", None) from None
    if not isinstance(header, dict) or "schema_version" not in header:
        raise IntegrityError("header line lacks schema_version", None)
    if header["schema_version"] != SCHEMA_VERSION:
        raise FormatVersionError(
            f"pathway schema version {header['schema_version']!r}; this build reads version {SCHEMA_VERSION}"
        )
    records: list[StepRecord] = []

    def last_good() -> int | None:
        return records[-1].step if records else None

    body = lines[1:]
    for i, line in enumerate(body):
        if i == len(body) - 1 and not complete:
            raise IntegrityError("last line is cut off", last_good())
        try:
            records.append(record_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"bad record on line {i + 2}: {e}", last_good()) from None
    if not complete and not body:
        raise IntegrityError("header line is cut off", None)
    expected = header.get("n_records")
    if expected is not None and expected != len(records):
        raise IntegrityError(f"header promises {expected} records, found {len(records)}", last_good())
    try:
        return Pathway(records, str(header["config_digest"]), int(header["seed"]))
    except (KeyError, InputDomainError) as e:
        raise IntegrityError(f"inconsistent pathway: {e}", last_good()) from None


def read_pathway(source: str | Path | TextIO) -> Pathway:
    if isinstance(source, (str, Path)):
        text = Path(source).read_bytes().decode("utf-8")
    else:
        text = source.read()
    return parse_pathway(text)


def dump_curve(curve: RatioCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in zip(curve.steps, curve.driven_cumulative, curve.control_cumulative, curve.ratio, curve.phases):
        step, d, c, r, phase = row
        w.writerow((step, d, c, fmt_real(r), phase))
    return buf.getvalue()


def write_curve(curve: RatioCurve, destination: str | Path) -> None:
    Path(destination).write_bytes(dump_curve(curve).encode("utf-8"))


def read_curve(source: str | Path) -> RatioCurve:
    with open(source, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise IntegrityError(f"{source}: expected header {','.join(CSV_HEADER)}", None)
    body = rows[1:]
    return RatioCurve(
        steps=[int(r[0]) for r in body],
        driven_cumulative=[int(r[1]) for r in body],
        control_cumulative=[int(r[2]) for r in body],
        ratio=[float(r[3]) for r in body],
        phases=[r[4] for r in body],
    )


def write_qtable(q: QTable, destination: str | Path) -> None:
    Path(destination).write_bytes((json.dumps(q.to_dict(), indent=1) + "\n").encode("utf-8"))


def read_qtable(source: str | Path) -> QTable:
    return QTable.from_dict(json.loads(Path(source).read_text(encoding="utf-8")))


def read_labeled(source: str | Path) -> list[tuple[ContentItem, bool, bool]]:
    """Labeled evaluation set: one JSON object per line with item fields plus ``on_topic`` and ``negative``."""
    out = []
    for n, line in enumerate(Path(source).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append((ContentItem.from_dict(d), bool(d["on_topic"]), bool(d["negative"])))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise InputDomainError(f"{source}:{n}: bad labeled item: {e}") from None
    return out


def dump_metrics(rows: Iterable[tuple[str, EvalCounts]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("dimension", "tp", "fp", "tn", "fn", "precision", "recall", "accuracy", "f1"))
    for name, c in rows:
        w.writerow((name, c.tp, c.fp, c.tn, c.fn, *(fmt_real(m) for m in eval_metrics(c))))
    return buf.getvalue()
