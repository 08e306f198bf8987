"""Wire-protocol client for remote score oracles.

Protocol: newline-delimited JSON over a stream socket or a child process's
stdio.  One request per line:

    {"id": "<string>", "x_t": [f64...], "t": f64, "slot": "target"|"null"|"gnp"|"tnp", "text": "<prompt>"}

One response per line, matched by id (responses may arrive out of order):

    {"id": "<string>", "eps": [f64...]}    or    {"id": "<string>", "error": "<message>"}

Floats are IEEE-754 doubles rendered in shortest round-trip decimal, which is
what Python's ``json`` module emits natively.

The client sends prompt text composed from a :class:`PromptSpec`; the target
negative slot is always the target text joined with the negative fragment, so
the composition invariant holds by construction.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OracleError
from .oracle import Condition, Slot

DEFAULT_NEGATIVE_FRAGMENT = (
    "oversaturated, smooth, pixelated, cartoon, foggy, hazy, blurry, bad structure, noisy, malformed"
)


@dataclass(frozen=True)
class PromptSpec:
    """Client-side prompt table; the tnp text is composed, never stored."""

    target_text: str = ""
    negative_fragment: str = DEFAULT_NEGATIVE_FRAGMENT

    def text_for(self, slot: Slot) -> str:
        if slot is Slot.TARGET:
            return self.target_text
        if slot is Slot.NULL:
            return ""
        if slot is Slot.GENERAL_NEGATIVE:
            return self.negative_fragment
        return self.target_text + ", " + self.negative_fragment


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise OracleError(f"cannot connect to oracle at {host}:{port}: {e}") from e
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as e:
            raise OracleError(f"oracle connection lost while sending: {e}") from e

    def recv_line(self) -> str:
        try:
            line = self._reader.readline()
        except OSError as e:
            raise OracleError(f"oracle connection lost while receiving: {e}") from e
        if not line:
            raise OracleError("oracle closed the connection")
        return line

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


class _StdioTransport:
    def __init__(self, argv: list[str]):
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as e:
            raise OracleError(f"cannot start oracle process {argv!r}: {e}") from e

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise OracleError(f"oracle process pipe broken while sending: {e}") from e

    def recv_line(self) -> str:
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise OracleError(f"oracle process closed stdout (exit code {code})")
        return line

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=3)
            except subprocess.TimeoutExpired:
                self._proc.kill()


def _open_transport(endpoint: str, timeout: float):
    if endpoint.startswith("stdio:"):
        argv = shlex.split(endpoint[len("stdio:"):])
        if not argv:
            raise ConfigError(f"empty stdio oracle command in endpoint {endpoint!r}")
        return _StdioTransport(argv)
    addr = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"oracle endpoint must look like host:port or stdio:<command>, got {endpoint!r}")
    return _TcpTransport(host or "127.0.0.1", int(port), timeout)


class RemoteOracle:
    """Synchronous client for the score-oracle wire protocol.

    One connection serves one run; requests are issued one at a time and
    responses are matched by id, buffering any that arrive out of order.
    """

    def __init__(self, endpoint: str, prompts: PromptSpec | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.prompts = prompts if prompts is not None else PromptSpec()
        self._transport = _open_transport(endpoint, timeout)
        self._next_id = 0
        self._pending: dict[str, dict] = {}

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _await_response(self, request_id: str, slot: str) -> dict:
        if request_id in self._pending:
            return self._pending.pop(request_id)
        while True:
            line = self._transport.recv_line().strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as e:
                raise OracleError(f"malformed oracle response line: {e}", slot=slot) from e
            msg_id = msg.get("id")
            if msg_id == request_id:
                return msg
            if isinstance(msg_id, str):
                self._pending[msg_id] = msg

    def predict_noise(self, x_t: np.ndarray, t: float, cond: Condition) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        slot = cond.slot.value
        text = cond.text if cond.text else self.prompts.text_for(cond.slot)
        request_id = str(self._next_id)
        self._next_id += 1
        request = {"id": request_id, "x_t": x_t.tolist(), "t": float(t), "slot": slot, "text": text}
        try:
            self._transport.send_line(json.dumps(request))
            msg = self._await_response(request_id, slot)
        except OracleError as e:
            if e.slot is None:
                raise OracleError(str(e), slot=slot) from e
            raise
        if "error" in msg:
            raise OracleError(f"oracle returned error: {msg['error']}", slot=slot)
        eps = msg.get("eps")
        if not isinstance(eps, list):
            raise OracleError("oracle response carries neither eps nor error", slot=slot)
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != x_t.shape:
            raise OracleError(f"oracle returned dim {eps.shape}, expected {x_t.shape}", slot=slot)
        return eps
