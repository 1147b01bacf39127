"""
Shared fixtures for the traffic simulation tests.
"""

import copy
import os
from typing import Any, Dict, Iterable

import pytest
from fastapi.testclient import TestClient

from core.scenario import Scenario, scenario_from_dict
from core.transport import HttpTransport, InProcessTransport, Service, build_app

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scenarios")

HOME = "http://home.local"
WORK = "http://work.local"
ROAD = "http://road.local"
DRIVERS = "http://drivers.local"
CLOCK = "http://clock.local"
LIGHTS = "http://lights.local"

DEFAULT_PARAMS = {
    "tickSeconds": 1, "accel": 2, "decel": 4, "gapMin": 5,
    "greenTicks": 10, "maxTicks": 5000, "randomSeed": 0,
}


def commute_document(length: float = 100, speed_limit: float = 10, **params: Any) -> Dict[str, Any]:
    """Two junctions, one street each way, one commuter."""
    return {
        "junctions": [{"id": "A", "hasLight": False}, {"id": "B", "hasLight": False}],
        "streets": [
            {"id": "s1", "from": "A", "to": "B", "length": length, "speedLimit": speed_limit},
            {"id": "s2", "from": "B", "to": "A", "length": length, "speedLimit": speed_limit},
        ],
        "homes": [{"id": "h1", "junction": "A", "activity": "Watch TV"}],
        "works": [{"id": "w1", "junction": "B", "activity": "Work"}],
        "population": [
            {"agentId": "alice", "home": "h1", "work": "w1", "departHomeTick": 0, "departWorkTick": 20},
        ],
        "params": {**DEFAULT_PARAMS, **params},
    }


def crossing_document(**params: Any) -> Dict[str, Any]:
    """A -> B -> C with B lit and approached from A and C."""
    return {
        "junctions": [
            {"id": "A", "hasLight": False},
            {"id": "B", "hasLight": True},
            {"id": "C", "hasLight": False},
        ],
        "streets": [
            {"id": "s1", "from": "A", "to": "B", "length": 100, "speedLimit": 10},
            {"id": "s2", "from": "B", "to": "C", "length": 100, "speedLimit": 10},
            {"id": "s3", "from": "C", "to": "B", "length": 100, "speedLimit": 10},
            {"id": "s4", "from": "B", "to": "A", "length": 100, "speedLimit": 10},
        ],
        "homes": [{"id": "h1", "junction": "A", "activity": "Watch TV"}],
        "works": [{"id": "w1", "junction": "C", "activity": "Work"}],
        "population": [
            {"agentId": "p1", "home": "h1", "work": "w1", "departHomeTick": 0, "departWorkTick": 50},
        ],
        "params": {**DEFAULT_PARAMS, **params},
    }


def with_changes(document: Dict[str, Any], section: str, index: int, **changes: Any) -> Dict[str, Any]:
    changed = copy.deepcopy(document)
    changed[section][index].update(changes)
    return changed


@pytest.fixture
def commute() -> Scenario:
    return scenario_from_dict(commute_document())


@pytest.fixture
def crossing() -> Scenario:
    return scenario_from_dict(crossing_document())


@pytest.fixture
def grid_path() -> str:
    return os.path.join(SCENARIO_DIR, "grid3x3.yaml")


@pytest.fixture
def commute_path() -> str:
    return os.path.join(SCENARIO_DIR, "commute.yaml")


def mount_all(services: Iterable[Service]) -> InProcessTransport:
    """Mount services on one in-process transport they all share."""
    transport = InProcessTransport()
    for service in services:
        transport.mount(service)
        service.transport = transport
    return transport


def http_all(services: Iterable[Service]) -> HttpTransport:
    """Serve each service through its FastAPI app and a test client on its base URL."""
    services = list(services)
    clients = {s.base_url: TestClient(build_app(s), base_url=s.base_url) for s in services}
    transport = HttpTransport(clients=clients)
    for service in services:
        service.transport = transport
    return transport


@pytest.fixture(params=["inprocess", "http"])
def wire(request):
    """Factory wiring services through either transport."""
    return mount_all if request.param == "inprocess" else http_all
