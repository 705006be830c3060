"""
Shared fixtures: shipped taxonomies, the worked-example data set and settings
pointing at a temporary snapshot path.
"""

import os
from pathlib import Path

import pytest

from ioc_decay.config import Settings
from ioc_decay.ingestion import import_all
from ioc_decay.taxonomy import load_registry

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = Path(__file__).resolve().parent / "fixtures"
SHIPPED_TAXONOMIES = ROOT / "data" / "taxonomies"
WORKED_EXAMPLES = FIXTURES / "worked_examples"


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    """Keep a developer's IOC_DECAY_* environment out of the tests."""
    for key in list(os.environ):
        if key.startswith("IOC_DECAY_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture(scope="session")
def registry():
    """misp, osint and admiralty-scale as shipped."""
    return load_registry(SHIPPED_TAXONOMIES)


@pytest.fixture(scope="session")
def weighted_registry():
    """Synthetic namespace with explicit weights, undefined and unrated levels."""
    return load_registry(FIXTURES / "taxonomies")


@pytest.fixture
def settings(tmp_path):
    """Settings over the worked-example fixtures with a per-test snapshot path."""
    return Settings(
        taxonomy_dir=SHIPPED_TAXONOMIES,
        events_file=WORKED_EXAMPLES / "events.json",
        sources_file=WORKED_EXAMPLES / "sources.json",
        sightings_file=WORKED_EXAMPLES / "sightings.ndjson",
        store_path=tmp_path / "store.json",
        _env_file=None,
    )


@pytest.fixture
def imported(settings):
    """ImportResult of the worked-example fixtures."""
    return import_all(settings)
