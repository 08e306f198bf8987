"""oracle-bridge: serve a text-conditioned denoiser over the score-oracle wire protocol."""

import json
import socket

from .backends import StableDiffusionBackend, SyntheticBackend
from .prompts import DEFAULT_NEGATIVE_FRAGMENT, PromptTable
from .server import OracleServer, serve_stdio, serve_tcp
from .timesteps import to_native_index

__version__ = "0.1.0"


def healthcheck(host: str, port: int, timeout: float = 5.0) -> dict:
    """Send a zero-dimension probe; a healthy server answers with empty eps."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall((json.dumps({"id": "probe", "x_t": [], "t": 0.5, "slot": "null", "text": ""}) + "\n").encode())
        reader = sock.makefile("r")
        return json.loads(reader.readline())
