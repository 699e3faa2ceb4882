"""NDJSON wire protocol between the engine and an external feed driver.

One JSON object per line, UTF-8, LF-terminated. The driver opens with
``hello``, then serves ``content`` messages; the engine answers each with an
``action`` carrying the same step. Either side may close with ``end``. The
engine may send ``reset`` between pairs to ask for a fresh feed.

Keys are written in a fixed order: ``type`` first, then the fields in the
order they are declared on each message class. Optional fields that are
unset are omitted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Any, Iterable, Mapping

from .model import ACTIONS, Action

PROTOCOL_VERSION = 1
MAX_LINE_BYTES = 64 * 1024

_ACTION_NAMES = tuple(a.value for a in ACTIONS)


class ProtocolError(Exception):
    """A message or session broke the wire protocol."""


class ParseError(ProtocolError):
    """A line was not valid UTF-8 JSON."""


class FramingError(ProtocolError):
    """A line was too long or carried an embedded newline."""


class HandshakeError(ProtocolError):
    """The peer speaks a different protocol version."""


class EncodeError(ProtocolError):
    """A message cannot be written, e.g. it holds a non-finite number."""


class SessionError(ProtocolError):
    """A message arrived out of order.

    ``position`` is the 0-based index of the offending message in the session.
    ``step`` is the step that message carries, or for messages without one,
    the last step seen before it (None if no step was seen yet).
    """

    def __init__(self, message: str, *, position: int, step: int | None):
        super().__init__(f"{message} (message {position}, step {step})")
        self.position = position
        self.step = step


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION
    topics: tuple[str, ...] = ()

    type = "hello"


@dataclass(frozen=True)
class Content:
    step: int
    id: str
    topic_conf: float | None = None
    sent_conf: float | None = None
    text: str | None = None
    duration_s: float | None = None
    valid_actions: tuple[str, ...] | None = None

    type = "content"

    @property
    def has_scores(self) -> bool:
        return self.topic_conf is not None and self.sent_conf is not None


@dataclass(frozen=True)
class ActionMsg:
    step: int
    action: str

    type = "action"


@dataclass(frozen=True)
class Reset:
    type = "reset"


@dataclass(frozen=True)
class End:
    reason: str = ""

    type = "end"


Message = Hello | Content | ActionMsg | Reset | End

_TYPES: dict[str, type] = {cls.type: cls for cls in (Hello, Content, ActionMsg, Reset, End)}


def _jsonable(v: Any) -> Any:
    if isinstance(v, tuple):
        return list(v)
    return v


def encode_message(msg: Message) -> bytes:
    """Serialize ``msg`` as one canonical LF-terminated line."""
    obj: dict[str, Any] = {"type": msg.type}
    for f in fields(msg):
        v = getattr(msg, f.name)
        if v is None:
            continue
        if isinstance(v, float) and not math.isfinite(v):
            raise EncodeError(f"{msg.type}.{f.name} is not finite: {v!r}")
        obj[f.name] = _jsonable(v)
    try:
        text = json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except ValueError as e:
        raise EncodeError(str(e)) from None
    line = text.encode("utf-8")
    if len(line) > MAX_LINE_BYTES:
        raise FramingError(f"encoded {msg.type} is {len(line)} bytes, over the {MAX_LINE_BYTES}-byte limit")
    return line + b"\n"


def _int(obj: Mapping[str, Any], key: str) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ProtocolError(f"{obj.get('type')}.{key} must be a non-negative integer, got {v!r}")
    return v


def _str(obj: Mapping[str, Any], key: str, optional: bool = False) -> str | None:
    v = obj.get(key)
    if v is None and optional:
        return None
    if not isinstance(v, str):
        raise ProtocolError(f"{obj.get('type')}.{key} must be a string, got {v!r}")
    return v


def _real(obj: Mapping[str, Any], key: str, lo: float, hi: float) -> float | None:
    v = obj.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError(f"{obj.get('type')}.{key} must be a number, got {v!r}")
    v = float(v)
    if not (math.isfinite(v) and lo <= v <= hi):
        raise ProtocolError(f"{obj.get('type')}.{key} = {v!r} outside [{lo}, {hi}]")
    return v


def _str_list(obj: Mapping[str, Any], key: str) -> tuple[str, ...]:
    v = obj.get(key)
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise ProtocolError(f"{obj.get('type')}.{key} must be a list of strings")
    return tuple(v)


def _check_keys(obj: Mapping[str, Any], cls: type) -> None:
    allowed = {"type"} | {f.name for f in fields(cls)}
    extra = set(obj) - allowed
    if extra:
        raise ProtocolError(f"{cls.type} has unexpected fields {sorted(extra)}")


def decode_message(line: bytes | str) -> Message:
    """Parse one line (with or without its trailing LF) into a message."""
    if isinstance(line, str):
        line = line.encode("utf-8")
    if line.endswith(b"\n"):
        line = line[:-1]
    if len(line) > MAX_LINE_BYTES:
        raise FramingError(f"line of {len(line)} bytes exceeds {MAX_LINE_BYTES}")
    if b"\n" in line:
        raise FramingError("embedded newline")
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"malformed message: {e}") from None
    if not isinstance(obj, dict):
        raise ParseError("message must be a JSON object")
    kind = obj.get("type")
    cls = _TYPES.get(kind) if isinstance(kind, str) else None
    if cls is None:
        raise ProtocolError(f"unknown message type {kind!r}")
    _check_keys(obj, cls)

    if cls is Hello:
        version = _int(obj, "version")
        if version != PROTOCOL_VERSION:
            raise HandshakeError(f"peer speaks protocol version {version}, expected {PROTOCOL_VERSION}")
        return Hello(version, _str_list(obj, "topics"))
    if cls is Content:
        valid = None
        if "valid_actions" in obj:
            valid = _str_list(obj, "valid_actions")
            unknown = [a for a in valid if a not in _ACTION_NAMES]
            if unknown:
                raise ProtocolError(f"content.valid_actions has unknown actions {unknown}")
            if Action.SKIP.value not in valid:
                raise ProtocolError("content.valid_actions must include skip")
        msg = Content(
            step=_int(obj, "step"),
            id=_str(obj, "id"),
            topic_conf=_real(obj, "topic_conf", 0.0, 1.0),
            sent_conf=_real(obj, "sent_conf", 0.0, 1.0),
            text=_str(obj, "text", optional=True),
            duration_s=_real(obj, "duration_s", 0.0, math.inf),
            valid_actions=valid,
        )
        if not msg.has_scores and msg.text is None:
            raise ProtocolError(f"content at step {msg.step} needs both confidences or a text field")
        if (msg.topic_conf is None) != (msg.sent_conf is None):
            raise ProtocolError(f"content at step {msg.step} carries only one confidence")
        return msg
    if cls is ActionMsg:
        action = _str(obj, "action")
        if action not in _ACTION_NAMES:
            raise ProtocolError(f"unknown action {action!r}")
        return ActionMsg(_int(obj, "step"), action)
    if cls is Reset:
        return Reset()
    return End(_str(obj, "reason"))


class SessionValidator:
    """Checks the message order of one session, in the order messages cross the wire.

    Grammar: ``hello`` first; then content/action pairs with matching steps.
    ``reset`` and ``end`` may follow a pair or an unanswered content, which is
    then abandoned. A driver answers each action with the next content, so
    the engine usually resets from that pending state. ``reset`` needs some
    content since the last hello or reset. Content steps strictly increase
    over the whole session, across resets.
    """

    def __init__(self) -> None:
        self.position = 0
        self.last_step: int | None = None
        self.pending: Content | None = None
        self.state = "start"  # start -> open -> (pending <-> open) -> closed

    def _fail(self, why: str, step: int | None) -> SessionError:
        return SessionError(why, position=self.position, step=step)

    def feed(self, msg: Message) -> None:
        step = getattr(msg, "step", None)
        where = step if step is not None else self.last_step
        state = self.state
        if state == "closed":
            raise self._fail(f"{msg.type} after end", where)
        if state == "start":
            if not isinstance(msg, Hello):
                raise self._fail(f"expected hello, got {msg.type}", where)
            self.state = "open"
        elif isinstance(msg, Hello):
            raise self._fail("duplicate hello", where)
        elif isinstance(msg, Content):
            if state == "pending":
                raise self._fail(f"content at step {msg.step} while step {self.pending.step} awaits an action", where)
            if self.last_step is not None and msg.step <= self.last_step:
                raise self._fail(f"content step {msg.step} does not increase past {self.last_step}", where)
            self.pending = msg
            self.last_step = msg.step
            self.state = "pending"
        elif isinstance(msg, ActionMsg):
            if state != "pending":
                raise self._fail(f"action at step {msg.step} with no content pending", where)
            if msg.step != self.pending.step:
                raise self._fail(f"action step {msg.step} does not match content step {self.pending.step}", where)
            valid = self.pending.valid_actions
            if valid is not None and msg.action not in valid:
                raise self._fail(f"action {msg.action!r} is not valid at step {msg.step}", where)
            self.pending = None
            self.state = "paired"
        elif isinstance(msg, Reset):
            if state not in ("pending", "paired"):
                raise self._fail("reset needs a content since the last hello or reset", where)
            self.pending = None
            self.state = "open"
        elif isinstance(msg, End):
            self.pending = None
            self.state = "closed"
        self.position += 1

    @property
    def closed(self) -> bool:
        return self.state == "closed"


def validate_session(messages: Iterable[Message], require_end: bool = True) -> None:
    """Raise SessionError at the first message that breaks the session grammar."""
    v = SessionValidator()
    for msg in messages:
        v.feed(msg)
    if require_end and not v.closed:
        raise SessionError("session ended without an end message", position=v.position, step=v.last_step)
