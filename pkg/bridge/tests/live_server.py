import threading
import time

from oracle_bridge import healthcheck
from oracle_bridge.backends import SyntheticBackend
from oracle_bridge.prompts import PromptTable
from oracle_bridge.server import OracleServer, _TcpServer


class LiveServer:
    """A synthetic-backend oracle server on an ephemeral port."""

    def __init__(self, backend=None):
        backend = backend or SyntheticBackend(PromptTable("a ripe strawberry"))
        self.oracle = OracleServer(backend)
        self.server = _TcpServer(("127.0.0.1", 0), self.oracle)
        self.oracle.start_loading()
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def address(self):
        return self.server.server_address

    def wait_ready(self, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            reply = healthcheck(*self.address)
            if reply.get("eps") == []:
                return
            time.sleep(0.02)
        raise TimeoutError("server never became ready")

    def close(self):
        self.server.shutdown()
        self.server.server_close()
