"""Feed environments backed by an external driver speaking the NDJSON protocol.

Addresses:
  ``exec:<command line>``  spawn the driver and talk over its stdin/stdout
  ``tcp://host:port``      connect to a listening driver
"""

from __future__ import annotations

import shlex
import socket
import subprocess
from typing import BinaryIO

from .model import ActionMask, Action, ContentItem, EnvironmentExhausted, Observation
from .protocol import (
    MAX_LINE_BYTES,
    ActionMsg,
    Content,
    End,
    FramingError,
    Hello,
    Message,
    ProtocolError,
    Reset,
    SessionValidator,
    decode_message,
    encode_message,
)


class DriverError(ProtocolError):
    """The driver went away or could not be reached."""


class DriverEnded(EnvironmentExhausted, DriverError):
    """The driver closed the session before the engine was done."""


class Channel:
    """Framed message I/O over a pair of byte streams, with the session grammar enforced."""

    def __init__(self, reader: BinaryIO, writer: BinaryIO):
        self.reader = reader
        self.writer = writer
        self.session = SessionValidator()
        self.transcript: list[Message] = []

    def send(self, msg: Message) -> None:
        self.session.feed(msg)
        self.transcript.append(msg)
        try:
            self.writer.write(encode_message(msg))
            self.writer.flush()
        except (BrokenPipeError, ConnectionError, ValueError) as e:
            raise DriverError(f"driver stopped reading: {e}") from None

    def recv(self) -> Message:
        try:
            line = self.reader.readline(MAX_LINE_BYTES + 2)
        except (ConnectionError, ValueError) as e:
            raise DriverError(f"driver connection failed: {e}") from None
        if not line:
            raise DriverError("driver closed the connection")
        if not line.endswith(b"\n"):
            raise FramingError("line exceeds the size limit or is unterminated")
        msg = decode_message(line)
        self.session.feed(msg)
        self.transcript.append(msg)
        return msg


def _observation(msg: Content) -> Observation:
    item = ContentItem(
        id=msg.id,
        topic_mixture=(),
        latent_sentiment=0.0,
        popularity=0.0,
        duration_s=msg.duration_s or 0.0,
        text=msg.text,
    )
    mask = ActionMask() if msg.valid_actions is None else ActionMask.of(Action(a) for a in msg.valid_actions)
    scores = (msg.topic_conf, msg.sent_conf) if msg.has_scores else None
    return Observation(msg.step, item, mask, scores)


class DriverEnv:
    """A FeedEnv whose items come from a driver process or socket.

    The driver's hello is read on construction and fixes ``topic_labels``.
    """

    def __init__(self, reader: BinaryIO, writer: BinaryIO, closer=None):
        self.channel = Channel(reader, writer)
        self._closer = closer
        hello = self.channel.recv()
        if not isinstance(hello, Hello):  # pragma: no cover - the validator already insists
            raise ProtocolError("driver did not open with hello")
        self.topic_labels = hello.topics
        self._current: Observation | None = None

    def _next(self) -> Observation:
        msg = self.channel.recv()
        if isinstance(msg, End):
            raise DriverEnded(f"driver ended the session: {msg.reason or 'no reason given'}")
        if not isinstance(msg, Content):
            raise ProtocolError(f"expected content from the driver, got {msg.type}")
        self._current = _observation(msg)
        return self._current

    def reset(self) -> Observation:
        if self._current is None:
            return self._next()
        self.channel.send(Reset())
        return self._next()

    def observe(self) -> Observation:
        if self._current is None:
            raise ProtocolError("observe() before reset()")
        return self._current

    def act(self, action: Action) -> Observation:
        obs = self.observe()
        if action not in obs.mask:
            raise ProtocolError(f"action {action.value} is not valid at step {obs.step}")
        self.channel.send(ActionMsg(obs.step, action.value))
        return self._next()

    def close(self, reason: str = "done") -> None:
        if not self.channel.session.closed:
            try:
                self.channel.send(End(reason))
            except DriverError:
                pass
        if self._closer is not None:
            self._closer()
            self._closer = None

    def __enter__(self) -> DriverEnv:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(address: str, timeout: float | None = 30.0) -> DriverEnv:
    """Open a driver session at ``address`` (``exec:...`` or ``tcp://host:port``)."""
    if address.startswith("exec:"):
        argv = shlex.split(address[len("exec:"):])
        if not argv:
            raise DriverError("exec: address needs a command")
        try:
            proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as e:
            raise DriverError(f"cannot start driver {argv[0]!r}: {e}") from None

        def close() -> None:
            for stream in (proc.stdin, proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            try:
                proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

        try:
            return DriverEnv(proc.stdout, proc.stdin, close)
        except BaseException:
            close()
            raise
    if address.startswith("tcp://"):
        host, _, port = address[len("tcp://"):].rpartition(":")
        try:
            sock = socket.create_connection((host.strip("[]"), int(port)), timeout=timeout)
        except (OSError, ValueError) as e:
            raise DriverError(f"cannot connect to {address}: {e}") from None
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")

        def close() -> None:
            for f in (rfile, wfile):
                try:
                    f.close()
                except OSError:
                    pass
            sock.close()

        try:
            return DriverEnv(rfile, wfile, close)
        except BaseException:
            close()
            raise
    raise DriverError(f"unsupported driver address {address!r}; use exec:<cmd> or tcp://host:port")
