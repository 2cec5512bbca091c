from __future__ import annotations

from pathlib import Path

import pytest

from maskbeam_server.app import create_app

from serving import FIXTURES, LiveServer, keyword_config, scripted_config


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def scripted_server():
    with LiveServer(create_app(scripted_config())) as server:
        yield server


@pytest.fixture(scope="session")
def keyword_server():
    with LiveServer(create_app(keyword_config())) as server:
        yield server
