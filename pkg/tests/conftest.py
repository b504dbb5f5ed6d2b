import random
from pathlib import Path

import pytest

from app import create_app
from app.config import AnalysisConfig
from app.utils.dsl_io import load_protocol, load_scenario

CORPUS = Path(__file__).resolve().parent.parent / "resources" / "protocols"


@pytest.fixture
def corpus() -> Path:
    return CORPUS


@pytest.fixture
def protocol():
    """load a bundled protocol by name"""
    def load(name):
        return load_protocol(CORPUS / f"{name}.proto")
    return load


@pytest.fixture
def scenario():
    """load a bundled scenario; the protocol comes from its protocol line"""
    def load(name):
        return load_scenario(CORPUS / f"{name}.scen")
    return load


@pytest.fixture
def corpus_text():
    def read(filename):
        return (CORPUS / filename).read_text(encoding="utf-8")
    return read


@pytest.fixture
def rng():
    return random.Random(20240611)


@pytest.fixture
def app():
    app = create_app(AnalysisConfig())
    app.config['TESTING'] = True
    return app


@pytest.fixture
def client(app):
    return app.test_client()
