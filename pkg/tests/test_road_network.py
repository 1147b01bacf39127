"""
Tests for the road network service: kinematics, crossings, lights and resources.
"""

import math

import pytest

from core.errors import InvariantBreach
from core.road_network import RoadNetworkService, VehicleState
from core.scenario import scenario_from_dict
from core.transport import InProcessTransport
from tests.conftest import HOME, ROAD, WORK, commute_document, crossing_document


def _road(scenario, **kwargs) -> RoadNetworkService:
    transport = InProcessTransport()
    road = RoadNetworkService("road", ROAD, transport, scenario, {"home": HOME, "work": WORK}, **kwargs)
    transport.mount(road)
    return road


def _place(road, agent_id, street, offset=0.0, speed=0.0, route=(), destination=None):
    road.vehicles[agent_id] = VehicleState(agent_id, street, offset, speed, list(route), destination)
    return road.vehicles[agent_id]


def scalar_oracle(length, limit, accel, dt):
    """Offsets of a lone, always-accelerating vehicle until it reaches the stop line."""
    offset, speed, offsets = 0.0, 0.0, []
    while offset < length:
        speed = min(speed + accel * dt, limit)
        offset = min(offset + speed * dt, length)
        offsets.append(offset)
    return offsets


class TestKinematics:
    def test_accelerate_from_rest(self):
        road = _road(scenario_from_dict(commute_document(speed_limit=14)))
        vehicle = _place(road, "v", "s1")
        road.step(0, {"v": "accelerate"})
        assert (vehicle.speed, vehicle.offset) == (2.0, 2.0)

    def test_decelerate_never_below_zero(self, commute):
        road = _road(commute)
        vehicle = _place(road, "v", "s1", offset=10, speed=3)
        road.step(0, {"v": "decelerate"})
        assert (vehicle.speed, vehicle.offset) == (0.0, 10.0)

    def test_maintain_keeps_speed(self, commute):
        road = _road(commute)
        vehicle = _place(road, "v", "s1", offset=10, speed=6)
        road.step(0, {"v": "maintain"})
        assert (vehicle.speed, vehicle.offset) == (6.0, 16.0)

    def test_speed_capped_at_limit(self, commute):
        road = _road(commute)
        vehicle = _place(road, "v", "s1", offset=0, speed=9)
        road.step(0, {"v": "accelerate"})
        assert vehicle.speed == 10.0

    def test_follower_clamped_behind_leader(self, commute):
        road = _road(commute)
        leader = _place(road, "lead", "s1", offset=50)
        follower = _place(road, "follow", "s1", offset=40, speed=10)
        road.step(0, {"lead": "maintain", "follow": "accelerate"})
        assert leader.offset == 50.0
        assert follower.offset == 45.0
        assert follower.speed == 10.0
        road.check_invariants()

    def test_reaching_stop_line_zeroes_speed(self, commute):
        road = _road(commute)
        vehicle = _place(road, "v", "s1", offset=95, speed=10)
        events, _ = road.step(0, {"v": "maintain"})
        assert (vehicle.offset, vehicle.speed) == (100.0, 0.0)
        assert events["v"] == "moved"

    def test_closed_form_on_lone_street(self):
        scenario = scenario_from_dict(commute_document(length=200, speed_limit=14))
        road = _road(scenario)
        vehicle = _place(road, "v", "s1")
        expected = scalar_oracle(200, 14, 2, 1)
        observed = []
        while vehicle.offset < 200:
            road.step(len(observed), {"v": "accelerate"})
            observed.append(vehicle.offset)
        assert observed == expected
        ramp_ticks = math.ceil(14 / 2)
        ramp_distance = sum(2 * k for k in range(1, ramp_ticks + 1))
        assert ramp_distance == 56
        assert observed[ramp_ticks - 1] == 56
        assert len(observed) == ramp_ticks + math.ceil((200 - ramp_distance) / 14) == 18


class TestCrossing:
    def test_red_light_blocks(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s3")
        vehicle = _place(road, "v", "s1", offset=100, route=["s2"])
        events, _ = road.step(0, {"v": "move"})
        assert events["v"] == "blocked"
        assert (vehicle.street, vehicle.offset, vehicle.speed) == ("s1", 100.0, 0.0)

    def test_unset_light_is_red(self, crossing):
        road = _road(crossing)
        _place(road, "v", "s1", offset=100, route=["s2"])
        events, _ = road.step(0, {"v": "move"})
        assert events["v"] == "blocked"

    def test_green_move_crosses(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s1")
        vehicle = _place(road, "v", "s1", offset=100, route=["s2"])
        events, _ = road.step(0, {"v": "move"})
        assert events["v"] == "crossed"
        assert (vehicle.street, vehicle.offset, vehicle.route) == ("s2", 0.0, [])

    def test_waiting_without_move_stays(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s1")
        vehicle = _place(road, "v", "s1", offset=100, route=["s2"])
        events, _ = road.step(0, {"v": "maintain"})
        assert events["v"] == "blocked"
        assert vehicle.street == "s1"

    def test_blocked_entry_prevents_crossing(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s1")
        _place(road, "v", "s1", offset=100, route=["s2"])
        _place(road, "w", "s2", offset=2)
        events, _ = road.step(0, {"v": "move", "w": "maintain"})
        assert events["v"] == "blocked"

    def test_vehicle_just_arrived_at_stop_line_does_not_cross(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s1")
        vehicle = _place(road, "v", "s1", offset=95, speed=10, route=["s2"])
        events, _ = road.step(0, {"v": "move"})
        assert events["v"] == "moved"
        assert (vehicle.street, vehicle.offset) == ("s1", 100.0)

    def test_arrival_at_attached_destination(self, commute):
        road = _road(commute)
        _place(road, "v", "s1", offset=100, destination=f"{WORK}/places/w1")
        events, arrivals = road.step(0, {"v": "move"})
        assert events["v"] == "arrived"
        assert arrivals == ["v"]

    def test_no_arrival_at_wrong_junction(self, commute):
        road = _road(commute)
        _place(road, "v", "s1", offset=100, destination=f"{HOME}/places/h1")
        events, arrivals = road.step(0, {"v": "move"})
        assert events["v"] == "blocked"
        assert arrivals == []

    def test_only_front_vehicle_crosses(self, crossing):
        road = _road(crossing)
        road.set_light("B", "s1")
        front = _place(road, "a", "s1", offset=100, route=["s2"])
        back = _place(road, "b", "s1", offset=95, route=["s2"])
        road.step(0, {"a": "move", "b": "move"})
        assert front.street == "s2"
        assert (back.street, back.offset) == ("s1", 95.0)


class TestObservation:
    def _body(self, road, agent_id, street="s1"):
        reply = road.transport.post(f"{ROAD}/bodies", {
            "agentId": agent_id, "webhook": f"http://drivers.local/{agent_id}/notifications",
            "resource": f"{ROAD}/streets/{street}",
        })
        assert reply.status == 201
        return road.bodies[agent_id]

    def test_lone_vehicle(self, commute):
        road = _road(commute)
        body = self._body(road, "v")
        payload = road.build_observation(body, 0).to_wire()
        assert payload["type"] == "traffic"
        assert payload["atIntersection"] is False
        assert "gapAhead" not in payload
        assert payload["light"] == "none"
        assert payload["webhook"] == f"{ROAD}/bodies/v/action"
        assert payload["street"] == f"{ROAD}/streets/s1"

    def test_at_intersection_and_gap(self, crossing):
        road = _road(crossing)
        body = self._body(road, "back")
        _place(road, "front", "s1", offset=100)
        road.vehicles["back"].offset = 30
        payload = road.build_observation(body, 0)
        assert payload.gap_ahead == 65.0
        assert payload.light == "red"
        road.set_light("B", "s1")
        assert road.build_observation(body, 0).light == "green"
        road.vehicles["back"].offset = 100
        road.vehicles.pop("front")
        assert road.build_observation(body, 0).at_intersection is True


class TestResources:
    def test_registration_on_junction_is_forbidden(self, commute):
        road = _road(commute)
        reply = road.transport.post(f"{ROAD}/bodies", {
            "agentId": "v", "webhook": "http://drivers.local/v/notifications", "resource": f"{ROAD}/junctions/A",
        })
        assert reply.status == 403

    def test_blocked_entry_asks_for_retry(self, commute):
        road = _road(commute)
        _place(road, "x", "s1", offset=3)
        reply = road.transport.post(f"{ROAD}/bodies", {
            "agentId": "v", "webhook": "http://drivers.local/v/notifications", "resource": "/streets/s1",
        })
        assert reply.status == 503
        assert reply.headers["Retry-After"] == "1"

    def test_migration_needs_route_starting_on_target(self, commute):
        road = _road(commute)
        reply = road.transport.post(f"{ROAD}/bodies", {
            "agentId": "v", "webhook": "http://drivers.local/v/notifications",
            "targetResource": f"{ROAD}/streets/s1",
            "attributes": {"route": ["s2"], "destinationPlace": f"{WORK}/places/w1"},
        })
        assert reply.status == 400

    def test_set_light_errors(self, crossing):
        road = _road(crossing)
        put = road.transport.put
        assert put(f"{ROAD}/junctions/Z/light", {"green": "s1"}).status == 404
        assert put(f"{ROAD}/junctions/A/light", {"green": "s4"}).status == 400
        assert put(f"{ROAD}/junctions/B/light", {"green": "s2"}).status == 400
        assert put(f"{ROAD}/junctions/B/light", {"green": "s3"}).status == 200
        assert road.lights["B"].green == "s3"

    def test_route_document(self, crossing):
        road = _road(crossing)
        reply = road.transport.get(f"{ROAD}/routes", params={"from": "A", "to": "C"})
        assert reply.status == 200
        assert reply.body["route"] == ["s1", "s2"]
        assert reply.body["freeFlowSeconds"] == 20.0
        assert reply.body["links"] == [f"{ROAD}/streets/s1", f"{ROAD}/streets/s2"]

    def test_route_errors(self, crossing):
        road = _road(crossing)
        assert road.transport.get(f"{ROAD}/routes", params={"from": "A", "to": "Z"}).status == 404
        assert road.transport.get(f"{ROAD}/routes", params={"from": "A"}).status == 400

    def test_junction_links(self, crossing):
        road = _road(crossing)
        document = road.transport.get(f"{ROAD}/junctions/C").body
        assert document["links"]["incoming"] == [f"{ROAD}/streets/s2"]
        assert document["links"]["outgoing"] == [f"{ROAD}/streets/s3"]
        assert document["links"]["places"] == [f"{WORK}/places/w1"]
        assert road.transport.get(f"{ROAD}/junctions/Q").status == 404

    def test_street_document_lists_occupants(self, commute):
        road = _road(commute)
        _place(road, "v", "s1", offset=12, speed=4)
        document = road.transport.get(f"{ROAD}/streets/s1").body
        assert document["occupants"] == [{"agentId": "v", "offset": 12.0, "speed": 4.0}]
        assert document["links"]["to"] == f"{ROAD}/junctions/B"
        assert len(road.transport.get(f"{ROAD}/streets").body) == 2


class TestInvariants:
    def test_gap_breach(self, commute):
        road = _road(commute)
        _place(road, "a", "s1", offset=50)
        _place(road, "b", "s1", offset=47)
        with pytest.raises(InvariantBreach):
            road.check_invariants()

    def test_speed_breach(self, commute):
        road = _road(commute)
        _place(road, "a", "s1", offset=50, speed=11)
        with pytest.raises(InvariantBreach):
            road.check_invariants()


class TestTrajectory:
    def test_tick_writes_sorted_lines(self, tmp_path, commute):
        path = tmp_path / "trajectory.log"
        road = _road(commute, trajectory_path=str(path))
        _place(road, "b", "s1")
        _place(road, "a", "s1", offset=40)
        road.apply_actions(3, {"a": "accelerate", "b": "maintain"})
        road.finish_tick(3)
        road.close()
        assert path.read_text() == "3,a,s1,42.000,2.000,moved\n3,b,s1,0.000,0.000,moved\n"

    def test_waiting_vehicle_body_sits_on_junction(self, commute):
        road = _road(commute)
        road.transport.post(f"{ROAD}/bodies", {
            "agentId": "v", "webhook": "http://drivers.local/v/notifications", "resource": f"{ROAD}/streets/s1",
        })
        road.vehicles["v"].offset = 95
        road.vehicles["v"].speed = 10
        road.apply_actions(0, {"v": "maintain"})
        road.finish_tick(0)
        assert road.census() == [{"agentId": "v", "resource": f"{ROAD}/junctions/B"}]
