from __future__ import annotations

import json
from pathlib import Path

import pytest

CONFIG_PATH = Path(__file__).with_name("oracle_config.json")


def load_config() -> dict:
    return json.loads(CONFIG_PATH.read_text())


@pytest.fixture(scope="session")
def oracle_config() -> dict:
    return load_config()
