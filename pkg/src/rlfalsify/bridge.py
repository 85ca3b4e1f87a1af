"""Drive an external simulator over newline-delimited JSON on stdin/stdout.

Requests and replies, one JSON object per line::

    {"cmd":"init","dt":<s>,"schema_in":[...],"schema_out":[...]} -> {"ok":true,"state":[...]}
    {"cmd":"reset"}                                                -> {"ok":true,"state":[...]}
    {"cmd":"step","u":[...]}                                       -> {"ok":true,"state":[...]}
    {"cmd":"end"}

A reply with ``"ok": false`` may carry an ``"error"`` string.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import threading
from collections import deque

import numpy as np

from .formula import Schema
from .system import clamp_input

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
_EOF = object()


class BridgeError(RuntimeError):
    pass


class ProtocolError(BridgeError):
    pass


class BridgeTimeout(BridgeError):
    pass


class BridgeClosed(BridgeError):
    pass


def _pump(stream, sink):
    try:
        for line in stream:
            sink(line)
    except (OSError, ValueError):
        pass


class ExternalModel:
    """A :class:`~rlfalsify.system.SystemModel` backed by a child process.

    The step length is fixed at connection time; stepping with another
    ``dt`` is an error.
    """

    def __init__(self, command, input_schema: Schema, output_schema: Schema, input_bounds,
                 dt: float, timeout: float = DEFAULT_TIMEOUT):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.input_schema, self.output_schema = input_schema, output_schema
        self.input_bounds = tuple(tuple(map(float, b)) for b in input_bounds)
        if len(self.input_bounds) != len(input_schema):
            raise ValueError("one bound pair per input signal is required")
        self.dt = float(dt)
        self.timeout = float(timeout)
        self._lines: queue.Queue = queue.Queue()
        self._stderr: deque = deque(maxlen=20)
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True, bufsize=1,
        )
        threading.Thread(target=self._read_stdout, daemon=True).start()
        threading.Thread(target=_pump, args=(self._proc.stderr, self._stderr.append),
                         daemon=True).start()
        self.initial_state = self._request({
            "cmd": "init", "dt": self.dt,
            "schema_in": list(input_schema.names), "schema_out": list(output_schema.names),
        })

    def _read_stdout(self):
        _pump(self._proc.stdout, self._lines.put)
        self._lines.put(_EOF)

    def _diag(self) -> str:
        err = "".join(self._stderr).strip()
        return f"; child stderr: {err}" if err else ""

    def _request(self, msg: dict) -> np.ndarray:
        if self._proc.poll() is not None:
            raise BridgeClosed(f"simulator exited with code {self._proc.returncode}{self._diag()}")
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise BridgeClosed(f"cannot write to simulator: {e}{self._diag()}") from e
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.kill()
            raise BridgeTimeout(f"no reply to {msg['cmd']!r} within {self.timeout} s") from None
        if line is _EOF:
            self._proc.wait(timeout=5)
            raise BridgeClosed(
                f"simulator closed its output during {msg['cmd']!r} "
                f"(exit code {self._proc.returncode}){self._diag()}")
        return self._parse(line, msg["cmd"])

    def _parse(self, line: str, cmd: str) -> np.ndarray:
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"malformed reply to {cmd!r}: {line.rstrip()!r} ({e.msg})") from None
        if not isinstance(reply, dict) or "ok" not in reply:
            raise ProtocolError(f"reply to {cmd!r} lacks 'ok': {line.rstrip()!r}")
        if reply["ok"] is not True:
            raise BridgeError(f"simulator rejected {cmd!r}: {reply.get('error', 'no reason given')}")
        state = reply.get("state")
        if (not isinstance(state, list) or len(state) != len(self.output_schema)
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in state)):
            raise ProtocolError(
                f"reply to {cmd!r} needs a state of {len(self.output_schema)} numbers: "
                f"{line.rstrip()!r}")
        out = np.array(state, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ProtocolError(f"non-finite state in reply to {cmd!r}: {line.rstrip()!r}")
        return out

    def reset(self) -> np.ndarray:
        return self._request({"cmd": "reset"})

    def step(self, u, dt: float) -> np.ndarray:
        if not math.isclose(dt, self.dt, rel_tol=1e-12):
            raise ValueError(f"bridge connected with dt={self.dt}, step requested dt={dt}")
        u = clamp_input(u, self.input_bounds, "bridge: ")
        return self._request({"cmd": "step", "u": [float(x) for x in u]})

    def kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self):
        """Send ``end`` and wait briefly; kill the child if it lingers."""
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(json.dumps({"cmd": "end"}) + "\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, ValueError, subprocess.TimeoutExpired):
                self.kill()
        for s in (self._proc.stdin, self._proc.stdout, self._proc.stderr):
            try:
                s.close()
            except (OSError, ValueError):
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.kill()
        except Exception:
            pass


def external_model_connect(command, input_schema: Schema, output_schema: Schema, input_bounds,
                           dt: float, timeout: float = DEFAULT_TIMEOUT) -> ExternalModel:
    return ExternalModel(command, input_schema, output_schema, input_bounds, dt, timeout)
