from __future__ import annotations

import json
from pathlib import Path

import pytest

from corpuschat.config import ServiceConfig
from corpuschat.engine import Engine

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

MANIFEST_PATH = FIXTURES / "mda-mini.json"
BODIES_DIR = FIXTURES / "bodies"
KOS_PATH = FIXTURES / "kos-mini.ttl-json"
LONG_PARAGRAPH = FIXTURES / "long_paragraph.txt"

MBM_QUERY = "explain male breadwinner model to me"


@pytest.fixture(scope="session")
def manifest_raw() -> dict:
    return json.loads(MANIFEST_PATH.read_text(encoding="utf-8"))


def make_engine(data_dir: Path, **overrides) -> Engine:
    config = ServiceConfig(data_dir=data_dir, offline_mode=True,
                           kg_fixture=KOS_PATH, **overrides)
    return Engine(config)


@pytest.fixture
def engine(tmp_path) -> Engine:
    return make_engine(tmp_path / "data")


@pytest.fixture
def indexed_engine(tmp_path) -> Engine:
    eng = make_engine(tmp_path / "data")
    eng.ingest(MANIFEST_PATH, BODIES_DIR)
    eng.build_index("mda-mini")
    return eng
