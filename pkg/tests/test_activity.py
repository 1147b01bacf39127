"""
Tests for the home and work activity services.
"""

from typing import Dict, List

import pytest

from core.activity import ActivityService
from core.road_network import RoadNetworkService
from core.transport import InProcessTransport, Service, ServiceRequest
from tests.conftest import DRIVERS, HOME, ROAD, WORK, mount_all


class ScriptedDriver(Service):
    """Answers every observation with a fixed action per agent."""

    ROUTES = [("PUT", "/{agent_id}/notifications", "notify")]

    def __init__(self, transport, actions: Dict[str, str]):
        super().__init__("drivers", DRIVERS, transport)
        self.actions = actions
        self.observations: List[dict] = []

    def notify(self, request: ServiceRequest):
        payload = request.body
        self.observations.append(payload)
        action = self.actions.get(request.path_params["agent_id"])
        if action:
            reply = self.transport.put(payload["webhook"], {"action": action, "forTick": payload["time"]})
            assert reply.status == 200
        return {"ok": True}


@pytest.fixture
def world(commute):
    transport = InProcessTransport()
    road = RoadNetworkService("road", ROAD, transport, commute, {"home": HOME, "work": WORK})
    home = ActivityService("home", "home", HOME, transport, commute, road_url=ROAD)
    work = ActivityService("work", "work", WORK, transport, commute, road_url=ROAD)
    driver = ScriptedDriver(transport, {})
    mount_all([road, home, work, driver])
    return road, home, work, driver


def _register_alice(transport, agent_id="alice"):
    return transport.post(f"{HOME}/bodies", {
        "agentId": agent_id,
        "webhook": f"{DRIVERS}/{agent_id}/notifications",
        "resource": f"{HOME}/places/h1",
        "attributes": {"home": f"{HOME}/places/h1", "work": f"{WORK}/places/w1"},
    })


class TestPlaces:
    def test_place_document_links_junction(self, world):
        _, home, _, _ = world
        document = home.transport.get(f"{HOME}/places/h1").body
        assert document["kind"] == "home"
        assert document["activity"] == "Watch TV"
        assert document["links"]["junction"] == f"{ROAD}/junctions/A"
        assert document["occupant"] is None

    def test_unknown_place(self, world):
        _, home, _, _ = world
        assert home.transport.get(f"{HOME}/places/h9").status == 404

    def test_listing(self, world):
        _, _, work, _ = world
        assert [p["id"] for p in work.transport.get(f"{WORK}/places").body] == ["w1"]

    def test_unknown_kind(self, commute):
        with pytest.raises(ValueError):
            ActivityService("school", "school", "http://school.local", InProcessTransport(), commute, road_url=ROAD)

    def test_foreign_resource_is_unknown(self, world):
        _, home, _, _ = world
        assert home.resolve_resource(f"{WORK}/places/w1") is None
        assert home.resolve_resource("/places/h1") == f"{HOME}/places/h1"


class TestOccupancy:
    def test_occupied_place_refuses(self, world):
        _, home, _, _ = world
        assert _register_alice(home.transport).status == 201
        assert _register_alice(home.transport, "bob").status == 403
        assert home.transport.get(f"{HOME}/places/h1").body["occupant"] == "alice"

    def test_leaving_frees_the_place(self, world):
        _, home, _, _ = world
        _register_alice(home.transport)
        assert home.transport.delete(f"{HOME}/bodies/alice").status == 204
        assert _register_alice(home.transport, "bob").status == 201


class TestTicks:
    def test_observation(self, world):
        _, home, _, driver = world
        _register_alice(home.transport)
        home.run_tick(0)
        assert driver.observations == [{
            "type": "home", "time": 0, "webhook": f"{HOME}/bodies/alice/action", "activity": "Watch TV",
        }]

    def test_continue_keeps_occupant(self, world):
        _, home, _, driver = world
        driver.actions["alice"] = "continue"
        _register_alice(home.transport)
        home.run_tick(0)
        assert "alice" in home.bodies
        assert home.occupancy["h1"].occupant == "alice"

    def test_depart_with_free_entry(self, world):
        road, home, _, driver = world
        driver.actions["alice"] = "depart"
        _register_alice(home.transport)
        home.run_tick(0)
        assert "alice" not in home.bodies
        assert home.occupancy["h1"].occupant is None
        attributes = road.bodies["alice"].attributes
        assert attributes["route"] == ["s1"]
        assert attributes["direction"] == "home->work"
        assert attributes["departTick"] == 0
        assert attributes["origin"] == f"{HOME}/places/h1"
        assert attributes["destinationPlace"] == f"{WORK}/places/w1"
        assert road.vehicles["alice"].street == "s1"
        assert home.transport.get(f"{HOME}/bodies/alice").status == 410

    def test_depart_with_blocked_entry_retries(self, world):
        road, home, _, driver = world
        road.transport.post(f"{ROAD}/bodies", {
            "agentId": "blocker", "webhook": f"{DRIVERS}/blocker/notifications", "resource": f"{ROAD}/streets/s1",
        })
        driver.actions["alice"] = "depart"
        _register_alice(home.transport)

        home.run_tick(0)
        home.run_tick(1)
        assert "alice" in home.bodies
        assert home.occupancy["h1"].planned_route == ["s1"]
        assert home.occupancy["h1"].depart_tick == 0

        road.transport.delete(f"{ROAD}/bodies/blocker")
        home.run_tick(2)
        assert "alice" not in home.bodies
        assert road.bodies["alice"].attributes["departTick"] == 2

    def test_arrival_tick_is_not_carried_on(self, world):
        road, _, work, driver = world
        driver.actions["alice"] = "depart"
        work.transport.post(f"{WORK}/bodies", {
            "agentId": "alice",
            "webhook": f"{DRIVERS}/alice/notifications",
            "targetResource": f"{WORK}/places/w1",
            "attributes": {"home": f"{HOME}/places/h1", "work": f"{WORK}/places/w1", "arriveTick": 12},
        })
        work.run_tick(0)
        attributes = road.bodies["alice"].attributes
        assert "arriveTick" not in attributes
        assert attributes["direction"] == "work->home"
        assert attributes["route"] == ["s2"]
        assert attributes["destinationPlace"] == f"{HOME}/places/h1"
