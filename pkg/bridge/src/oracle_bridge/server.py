"""Newline-delimited JSON score-oracle server.

One request per line:

    {"id": "<string>", "x_t": [f64...], "t": f64, "slot": "target"|"null"|"gnp"|"tnp", "text": "..."}

One response per line, matched by id:

    {"id": "<string>", "eps": [f64...]}    or    {"id": "<string>", "error": "<message>"}

Slots resolve to prompts through the server's own table (the request's text
field is informational); a zero-length x_t is a health probe answered with an
empty eps. The backend loads in the background after the socket starts
listening: requests arriving earlier get an error response "loading".
Requests are handled sequentially per connection and connections are served
one at a time; malformed lines produce error responses, never a crash.
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading

import numpy as np

from .backends import Backend, normalized_t_to_index

VALID_SLOTS = ("target", "null", "gnp", "tnp")


class OracleServer:
    def __init__(self, backend: Backend, echo_prompts: bool = False):
        self.backend = backend
        self.echo_prompts = echo_prompts
        self.ready = threading.Event()
        self.load_error: str | None = None

    def start_loading(self) -> None:
        def _load():
            try:
                self.backend.load()
            except Exception as e:  # surfaced per request, the server stays up
                self.load_error = f"backend failed to load: {e}"
            finally:
                self.ready.set()

        threading.Thread(target=_load, daemon=True).start()

    def handle_line(self, line: str) -> str:
        """One request line in, one response line out."""
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            return json.dumps({"id": "", "error": f"malformed request: {e}"})
        request_id = request.get("id")
        if not isinstance(request_id, str):
            request_id = "" if request_id is None else str(request_id)
        try:
            return json.dumps({"id": request_id, "eps": self._answer(request)})
        except Exception as e:
            return json.dumps({"id": request_id, "error": str(e)})

    def _answer(self, request: dict) -> list:
        if not self.ready.is_set():
            raise RuntimeError("loading")
        if self.load_error is not None:
            raise RuntimeError(self.load_error)
        x_t = request.get("x_t")
        if not isinstance(x_t, list):
            raise ValueError("x_t must be a list of numbers")
        if len(x_t) == 0:
            return []  # health probe
        slot = request.get("slot")
        if slot not in VALID_SLOTS:
            raise ValueError(f"unknown slot {slot!r}; valid slots: {', '.join(VALID_SLOTS)}")
        t = request.get("t")
        if not isinstance(t, (int, float)):
            raise ValueError("t must be a number")
        x = np.asarray(x_t, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("x_t must be finite")
        t_index = normalized_t_to_index(self.backend, float(t))
        eps = self.backend.predict(x, t_index, slot)
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != x.shape:
            raise RuntimeError(f"backend returned dim {eps.shape}, expected {x.shape}")
        return eps.tolist()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            response = self.server.oracle.handle_line(line)
            try:
                self.wfile.write((response + "\n").encode("utf-8"))
            except OSError:
                return  # client went away


class _TcpServer(socketserver.TCPServer):
    # one connection at a time; further connections queue in the backlog
    allow_reuse_address = True

    def __init__(self, addr, oracle: OracleServer):
        super().__init__(addr, _Handler)
        self.oracle = oracle

    def handle_error(self, request, client_address):
        pass  # per-request failures already answered in-protocol


def parse_listen_addr(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"listen address must look like host:port, got {listen!r}")
    return host or "127.0.0.1", int(port)


def serve_tcp(listen: str, backend: Backend, ready_callback=None) -> None:
    """Blocking accept loop; loads the backend in the background."""
    oracle = OracleServer(backend)
    server = _TcpServer(parse_listen_addr(listen), oracle)
    oracle.start_loading()
    if ready_callback is not None:
        ready_callback(server)
    with server:
        server.serve_forever()


def serve_stdio(backend: Backend) -> None:
    """Answer the protocol over stdin/stdout (one process per client)."""
    oracle = OracleServer(backend)
    oracle.start_loading()
    oracle.ready.wait()
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        sys.stdout.write(oracle.handle_line(line) + "\n")
        sys.stdout.flush()
