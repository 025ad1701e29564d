"""Shared fixtures: the bundled catalog, a standard environment and a few vehicles."""

from pathlib import Path

import pytest

from app.config import load_config
from app.core.data_loader import FixtureCatalog
from app.core.fuel_model import Environment
from app.core.types import Position, VehicleClass


@pytest.fixture(autouse=True)
def default_config():
    """Every test starts and ends on the default configuration."""
    load_config()
    yield
    load_config()


@pytest.fixture
def catalog() -> FixtureCatalog:
    return FixtureCatalog()


@pytest.fixture
def env() -> Environment:
    return Environment()


@pytest.fixture
def road_test_truck(catalog):
    return catalog.spec("hdt_mcauliffe_road_test")


@pytest.fixture
def dataset_path(catalog):
    def _path(name: str) -> Path:
        return catalog.dataset_path(name)
    return _path


@pytest.fixture
def ldv2_trail(catalog):
    return catalog.model(VehicleClass.LDV, 2, Position.TRAIL)


@pytest.fixture
def bus2_trail(catalog):
    return catalog.model(VehicleClass.BUS, 2, Position.TRAIL)
