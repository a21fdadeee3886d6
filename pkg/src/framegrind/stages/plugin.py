"""Out-of-process stages speaking a line protocol over stdin/stdout.

Handshake: the host writes ``HELLO framegrind-plugin/1 <role>`` and the plugin
must echo the same line back. Each request is a header line
``FRAME <id> <w> <h> <channels>`` followed by exactly ``w*h*channels`` raw
bytes. The plugin answers with one of::

    FACES n          then n lines "x y w h"
    SMILE p
    LANDMARKS n      then n lines "x y"
    ERR <message>

All text is UTF-8, one message per ``\\n``-terminated line.
"""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..geometry import CONVENTIONS, LandmarkSet
from ..image import ImageBuffer
from ..pipeline import ResultPayload, StageError
from .types import FaceBox, SmileScore

log = logging.getLogger(__name__)

PROTOCOL = "framegrind-plugin/1"
ROLES = ("faces", "smile", "landmarks")


class PluginError(StageError):
    pass


class PluginTimeout(PluginError):
    pass


class PluginProtocolError(PluginError):
    def __init__(self, message: str, line: str | None = None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


class PluginExit(PluginError):
    def __init__(self, returncode):
        super().__init__(f"plugin exited with status {returncode}")
        self.returncode = returncode


class PluginReportedError(PluginError):
    pass


@dataclass(frozen=True)
class PluginSpec:
    command: tuple[str, ...]
    role: str = "faces"
    protocol: str = PROTOCOL
    timeout_ms: float = 2000.0

    def __post_init__(self):
        cmd = self.command
        if isinstance(cmd, str):
            cmd = tuple(shlex.split(cmd))
        object.__setattr__(self, "command", tuple(str(c) for c in cmd))
        if not self.command:
            raise ValueError("plugin command is empty")
        if self.role not in ROLES:
            raise ValueError(f"plugin role must be one of {ROLES}, got {self.role!r}")
        if not self.timeout_ms > 0:
            raise ValueError("plugin timeout must be positive")


_EOF = object()


class PluginProcess:
    """One plugin child process; not shared between workers."""

    def __init__(self, spec: PluginSpec):
        self.spec = spec
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()

    @property
    def running(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _pump(self, stream, sink):
        for raw in iter(stream.readline, b""):
            sink.put(raw.decode("utf-8", errors="replace").rstrip("\r\n"))
        sink.put(_EOF)

    def start(self) -> None:
        self._lines = queue.Queue()
        self._proc = subprocess.Popen(list(self.spec.command), stdin=subprocess.PIPE,
                                      stdout=subprocess.PIPE)
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines),
                         daemon=True).start()
        deadline = time.monotonic() + self.spec.timeout_ms / 1000.0
        hello = f"HELLO {self.spec.protocol} {self.spec.role}"
        self._write((hello + "\n").encode(), deadline)
        reply = self._readline(deadline)
        if reply != hello:
            self.kill()
            raise PluginProtocolError("bad handshake", reply)

    def _write(self, data: bytes, deadline: float):
        failure = []

        def write():
            try:
                self._proc.stdin.write(data)
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                failure.append(exc)

        th = threading.Thread(target=write, daemon=True)
        th.start()
        th.join(max(0.0, deadline - time.monotonic()))
        if th.is_alive():
            self.kill()
            raise PluginTimeout(f"write to plugin exceeded {self.spec.timeout_ms} ms")
        if failure:
            code = self._proc.wait()
            self._proc = None
            raise PluginExit(code)

    def _readline(self, deadline: float) -> str:
        try:
            line = self._lines.get(timeout=max(0.0, deadline - time.monotonic()))
        except queue.Empty:
            self.kill()
            raise PluginTimeout(f"no reply within {self.spec.timeout_ms} ms") from None
        if line is _EOF:
            code = self._proc.wait() if self._proc is not None else None
            self._proc = None
            raise PluginExit(code)
        return line

    def request(self, frame_id: int, img: ImageBuffer) -> ResultPayload:
        if not self.running:
            self.start()
        deadline = time.monotonic() + self.spec.timeout_ms / 1000.0
        header = f"FRAME {frame_id} {img.width} {img.height} {img.channels}\n".encode()
        self._write(header + img.data, deadline)
        line = self._readline(deadline)
        return self._parse(line, deadline)

    def _count(self, line, fields):
        if len(fields) != 2:
            raise PluginProtocolError("malformed response", line)
        try:
            n = int(fields[1])
        except ValueError:
            raise PluginProtocolError("malformed count", line) from None
        if n < 0:
            raise PluginProtocolError("negative count", line)
        return n

    def _numbers(self, line, arity):
        fields = line.split()
        try:
            vals = [float(v) for v in fields]
        except ValueError:
            raise PluginProtocolError("non-numeric field", line) from None
        if len(vals) != arity:
            raise PluginProtocolError(f"expected {arity} numbers", line)
        return vals

    def _parse(self, line: str, deadline: float) -> ResultPayload:
        fields = line.split()
        if not fields:
            raise PluginProtocolError("empty response line", line)
        kind = fields[0]
        if kind == "ERR":
            raise PluginReportedError(line[3:].strip() or "plugin reported an error")
        if kind == "SMILE":
            if len(fields) != 2:
                raise PluginProtocolError("malformed response", line)
            try:
                return ResultPayload("smile", SmileScore(float(fields[1])))
            except ValueError:
                raise PluginProtocolError("bad smile probability", line) from None
        if kind == "FACES":
            n = self._count(line, fields)
            boxes = []
            for _ in range(n):
                row = self._readline(deadline)
                vals = self._numbers(row, 4)
                try:
                    boxes.append(FaceBox(*vals))
                except ValueError:
                    raise PluginProtocolError("invalid face box", row) from None
            return ResultPayload("faces", boxes)
        if kind == "LANDMARKS":
            n = self._count(line, fields)
            pts = [self._numbers(self._readline(deadline), 2) for _ in range(n)]
            convention = "face-68" if n == CONVENTIONS["face-68"] else "generic"
            try:
                return ResultPayload("landmarks", [LandmarkSet(np.array(pts), convention)])
            except ValueError as exc:
                raise PluginProtocolError(f"invalid landmark set ({exc})", line) from None
        raise PluginProtocolError("unknown response", line)

    def kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                pass
            self._proc = None

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            self._proc.stdin.close()
            self._proc.wait(timeout=1.0)
        except (OSError, subprocess.TimeoutExpired):
            pass
        self.kill()


class PluginStage:
    """Stage function wrapping one plugin process (create one per worker)."""

    def __init__(self, spec: PluginSpec):
        self.spec = spec
        self.process = PluginProcess(spec)

    def __call__(self, ctx) -> ResultPayload:
        return self.process.request(ctx.frame.id, ctx.frame.image)

    def close(self):
        self.process.close()


def external_plugin_stage(spec: PluginSpec, img: ImageBuffer, context=None,
                          process: PluginProcess | None = None) -> ResultPayload:
    """Send one frame to a plugin and return its parsed reply.

    Without ``process`` a fresh plugin is started and shut down around the call.
    ``context`` may carry a ``frame_id`` attribute (default 0).
    """
    frame_id = getattr(context, "frame_id", 0) if context is not None else 0
    own = process is None
    proc = process or PluginProcess(spec)
    try:
        return proc.request(frame_id, img)
    finally:
        if own:
            proc.close()
