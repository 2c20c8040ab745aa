from __future__ import annotations

import pytest

from storyalign.mockserver import MockModelServer


@pytest.fixture
def mock_server():
    with MockModelServer() as server:
        yield server


@pytest.fixture
def scripted_server(request):
    """A mock server in script mode; tests append to .chat_script as needed."""
    with MockModelServer(chat_mode="script", chat_script=[]) as server:
        yield server
