import json
import socket
import socketserver
import sys
import threading

import numpy as np
import pytest

from distill_lab import Condition, OracleError, RemoteOracle, Slot, gather_terms
from distill_lab.remote import DEFAULT_NEGATIVE_FRAGMENT, PromptSpec

SLOT_GAIN = {"target": 2.0, "null": 1.0, "gnp": -1.0, "tnp": 0.5}


class _ProtocolHandler(socketserver.StreamRequestHandler):
    """Deterministic test oracle: eps = gain(slot) * x_t, plus failure knobs."""

    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                req = json.loads(line)
            except json.JSONDecodeError:
                self._send({"id": "?", "error": "malformed request"})
                continue
            mode = self.server.mode
            if mode == "garbage-then-answer":
                self.wfile.write(b"this is not json\n")
                self.server.mode = "ok"
            if mode == "decoy-then-answer":
                self._send({"id": "no-such-id", "eps": [0.0]})
                self.server.mode = "ok"
            if mode == "error-on-gnp" and req.get("slot") == "gnp":
                self._send({"id": req["id"], "error": "model exploded"})
                continue
            if mode == "wrong-dim":
                self._send({"id": req["id"], "eps": [1.0, 2.0]})
                continue
            if mode == "drop":
                return
            gain = SLOT_GAIN[req["slot"]]
            eps = [gain * v for v in req["x_t"]]
            self._send({"id": req["id"], "eps": eps})

    def _send(self, obj):
        self.wfile.write((json.dumps(obj) + "\n").encode("utf-8"))


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, mode="ok"):
        super().__init__(("127.0.0.1", 0), _ProtocolHandler)
        self.mode = mode

    def handle_error(self, request, client_address):
        pass  # client disconnects mid-write are expected in the failure tests


@pytest.fixture
def server():
    srv = _Server()
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def endpoint(srv):
    host, port = srv.server_address
    return f"{host}:{port}"


def test_remote_predict_noise_roundtrip(server):
    with RemoteOracle(endpoint(server), PromptSpec("a ripe strawberry")) as oracle:
        x = np.array([0.5, -1.25, np.pi, 1e-300])
        out = oracle.predict_noise(x, 0.5, Condition(Slot.TARGET))
        assert np.array_equal(out, 2.0 * x)  # float wire round-trip is exact
        out = oracle.predict_noise(x, 0.5, Condition(Slot.GENERAL_NEGATIVE))
        assert np.array_equal(out, -x)


def test_remote_gather_terms(server):
    with RemoteOracle(endpoint(server)) as oracle:
        x = np.array([1.0, 2.0])
        terms = gather_terms(oracle, x, 0.3, np.zeros(2))
        assert np.array_equal(terms.eps_tgt, 2.0 * x)
        assert np.array_equal(terms.eps_null, x)
        assert np.array_equal(terms.eps_tnp, 0.5 * x)


def test_remote_skips_unmatched_response_ids(server):
    server.mode = "decoy-then-answer"
    with RemoteOracle(endpoint(server)) as oracle:
        out = oracle.predict_noise(np.array([3.0]), 0.5, Condition(Slot.NULL))
        assert np.array_equal(out, np.array([3.0]))


def test_remote_malformed_response_raises(server):
    server.mode = "garbage-then-answer"
    with RemoteOracle(endpoint(server)) as oracle:
        with pytest.raises(OracleError, match="malformed"):
            oracle.predict_noise(np.array([1.0]), 0.5, Condition(Slot.NULL))


def test_remote_error_response_is_slot_tagged(server):
    server.mode = "error-on-gnp"
    with RemoteOracle(endpoint(server)) as oracle:
        with pytest.raises(OracleError) as exc:
            gather_terms(oracle, np.array([1.0]), 0.5, np.zeros(1))
        assert exc.value.slot == "gnp"
        assert "model exploded" in str(exc.value)


def test_remote_dim_mismatch_raises(server):
    server.mode = "wrong-dim"
    with RemoteOracle(endpoint(server)) as oracle:
        with pytest.raises(OracleError, match="dim"):
            oracle.predict_noise(np.array([1.0, 2.0, 3.0]), 0.5, Condition(Slot.TARGET))


def test_remote_connection_drop_raises(server):
    server.mode = "drop"
    with RemoteOracle(endpoint(server)) as oracle:
        with pytest.raises(OracleError, match="closed"):
            oracle.predict_noise(np.array([1.0]), 0.5, Condition(Slot.TARGET))


def test_remote_dead_endpoint_raises():
    with pytest.raises(OracleError, match="connect"):
        RemoteOracle("127.0.0.1:1")


def test_bad_endpoint_strings():
    from distill_lab.errors import ConfigError

    with pytest.raises(ConfigError):
        RemoteOracle("no-port-here")
    with pytest.raises(ConfigError):
        RemoteOracle("stdio:")


STDIO_SERVER = r"""
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "eps": [v * 3.0 for v in req["x_t"]]}), flush=True)
"""


def test_remote_stdio_transport_works(tmp_path):
    script = tmp_path / "mini_oracle.py"
    script.write_text(STDIO_SERVER)
    with RemoteOracle(f"stdio:{sys.executable} -u {script}") as oracle:
        x = np.array([1.5, -2.0])
        out = oracle.predict_noise(x, 0.5, Condition(Slot.TARGET))
        assert np.array_equal(out, 3.0 * x)


def test_prompt_spec_composition():
    spec = PromptSpec("an ice cream sundae")
    assert spec.text_for(Slot.TARGET) == "an ice cream sundae"
    assert spec.text_for(Slot.NULL) == ""
    assert spec.text_for(Slot.GENERAL_NEGATIVE) == DEFAULT_NEGATIVE_FRAGMENT
    assert spec.text_for(Slot.TARGET_NEGATIVE) == "an ice cream sundae, " + DEFAULT_NEGATIVE_FRAGMENT


def test_request_carries_prompt_text(server):
    # capture what goes over the wire by speaking the protocol directly
    host, port = server.server_address
    sock = socket.create_connection((host, port))
    reader = sock.makefile("r")
    spec = PromptSpec("a pomeranian dog")
    req = {"id": "0", "x_t": [1.0], "t": 0.25, "slot": "tnp", "text": spec.text_for(Slot.TARGET_NEGATIVE)}
    sock.sendall((json.dumps(req) + "\n").encode())
    resp = json.loads(reader.readline())
    assert resp["id"] == "0"
    assert resp["eps"] == [0.5]
    sock.close()
