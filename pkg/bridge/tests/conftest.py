import pytest

from live_server import LiveServer


@pytest.fixture
def live_server():
    srv = LiveServer()
    srv.wait_ready()
    yield srv
    srv.close()
