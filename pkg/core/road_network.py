"""
Road network service: street and junction resources, vehicle kinematics, lights and routes.
Arriving drivers are handed over to the Place service attached at their final junction.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from core.body_protocol import AgentBody, EnvironmentService, MigrationIntent
from core.errors import BrokenChain, InvariantBreach, NoRoute, ServiceError
from core.routing import RoadGraph
from core.scenario import Scenario
from core.trajectory import TrajectoryEntry, TrajectoryLog, TripRecord
from core.transport import BaseTransport, ServiceRequest
from core.utils import setup_logging, split_url
from core.validation import LightRequest, ObservationPayload, RegistrationRequest, validate_document

logger = setup_logging(__name__)

EPS = 1e-9
TRAFFIC_ACTIONS = frozenset({"move", "accelerate", "decelerate", "maintain"})


@dataclass
class VehicleState:
    """A point vehicle on one street; route holds the streets after the current one."""
    agent_id: str
    street: str
    offset: float = 0.0
    speed: float = 0.0
    route: List[str] = field(default_factory=list)
    destination_place: Optional[str] = None


@dataclass
class LightState:
    """Light of a lit junction; every approach other than green is red."""
    junction_id: str
    green: Optional[str] = None


class RoadNetworkService(EnvironmentService):
    """Hosts vehicles on streets and junctions and steps them every tick."""

    ROUTES = [
        ("GET", "/streets", "list_streets"),
        ("GET", "/streets/{street_id}", "get_street"),
        ("GET", "/junctions", "list_junctions"),
        ("GET", "/junctions/{junction_id}", "get_junction"),
        ("PUT", "/junctions/{junction_id}/light", "put_light"),
        ("GET", "/routes", "get_route"),
        ("GET", "/trips", "list_trips"),
    ]

    vocabulary = TRAFFIC_ACTIONS
    default_action = "maintain"

    def __init__(self, name: str, base_url: str, transport: BaseTransport, scenario: Scenario,
                 place_bases: Dict[str, str], clock_url: Optional[str] = None,
                 trajectory_path: Optional[str] = None, push_attempts: Optional[int] = None,
                 faults: Iterable[str] = ()):
        super().__init__(name, base_url, transport, clock_url, push_attempts, faults)
        self.scenario = scenario
        self.params = scenario.params
        self.streets = scenario.street_map()
        self.junctions = scenario.junction_map()
        self.graph = RoadGraph(scenario)
        self.lights: Dict[str, LightState] = {
            j.id: LightState(j.id) for j in scenario.junctions if j.has_light
        }
        bases = {kind: url.rstrip("/") for kind, url in place_bases.items()}
        self.attachments: Dict[str, List[str]] = {
            j.id: [f"{bases.get(p.kind, '')}/places/{p.id}" for p in scenario.places_at(j.id)]
            for j in scenario.junctions
        }
        self.vehicles: Dict[str, VehicleState] = {}
        self.trips: List[TripRecord] = []
        self.trajectory = TrajectoryLog(trajectory_path)
        self._tick_entries: Dict[str, TrajectoryEntry] = {}

    # ------------------------------------------------------------------
    # Resources
    # ------------------------------------------------------------------

    def street_url(self, street_id: str) -> str:
        return self.url(f"/streets/{street_id}")

    def junction_url(self, junction_id: str) -> str:
        return self.url(f"/junctions/{junction_id}")

    def resolve_resource(self, uri: str) -> Optional[str]:
        path = uri
        if "://" in uri:
            base, path = split_url(uri)
            if base != self.base_url:
                return None
        parts = path.strip("/").split("/")
        if len(parts) != 2:
            return None
        collection, item = parts
        if collection == "streets" and item in self.streets:
            return self.street_url(item)
        if collection == "junctions" and item in self.junctions:
            return self.junction_url(item)
        return None

    def _street_of(self, resource: str) -> Optional[str]:
        prefix = self.url("/streets/")
        return resource[len(prefix):] if resource.startswith(prefix) else None

    def vehicles_on(self, street_id: str) -> List[VehicleState]:
        """Vehicles of one street, front to back."""
        return sorted(
            (v for v in self.vehicles.values() if v.street == street_id),
            key=lambda v: (-v.offset, v.agent_id),
        )

    def entry_free(self, street_id: str) -> bool:
        return all(v.offset >= self.params.gap_min for v in self.vehicles.values() if v.street == street_id)

    def light_for(self, street_id: str) -> str:
        light = self.lights.get(self.streets[street_id].to)
        if light is None:
            return "none"
        return "green" if light.green == street_id else "red"

    # ------------------------------------------------------------------
    # Body hooks
    # ------------------------------------------------------------------

    def check_capacity(self, resource: str, request: RegistrationRequest) -> None:
        street_id = self._street_of(resource)
        if street_id is None:
            raise ServiceError(403, "Vehicles enter the road network on a street, not a junction")
        if request.is_migration:
            route = request.attributes.get("route")
            destination = request.attributes.get("destinationPlace")
            if not isinstance(route, list) or not route or route[0] != street_id:
                raise ServiceError(400, f"Migration route must start with street '{street_id}'")
            if not isinstance(destination, str) or not destination:
                raise ServiceError(400, "Migration requires a destinationPlace")
            try:
                self.graph.free_flow_time(route)
            except BrokenChain as e:
                raise ServiceError(400, str(e)) from e
        if not self.entry_free(street_id):
            raise ServiceError(503, f"Entry of street '{street_id}' is blocked", {"Retry-After": "1"})

    def on_body_created(self, body: AgentBody, request: RegistrationRequest) -> None:
        street_id = self._street_of(body.resource)
        route = list(body.attributes.get("route", [])) if request.is_migration else []
        self.vehicles[body.agent_id] = VehicleState(
            agent_id=body.agent_id,
            street=street_id,
            route=route[1:],
            destination_place=body.attributes.get("destinationPlace") if request.is_migration else None,
        )

    def on_body_removed(self, body: AgentBody) -> None:
        self.vehicles.pop(body.agent_id, None)

    def build_observation(self, body: AgentBody, tick: int) -> ObservationPayload:
        vehicle = self.vehicles[body.agent_id]
        street = self.streets[vehicle.street]
        leaders = [
            v.offset for v in self.vehicles.values()
            if v.street == vehicle.street and v.agent_id != vehicle.agent_id and v.offset > vehicle.offset
        ]
        gap = min(leaders) - vehicle.offset - self.params.gap_min if leaders else None
        return ObservationPayload(
            type="traffic",
            time=tick,
            webhook=self.action_url(body.agent_id),
            vehicleSpeed=vehicle.speed,
            atIntersection=vehicle.offset == street.length,
            gapAhead=gap,
            speedLimit=street.speed_limit,
            light=self.light_for(vehicle.street),
            street=self.street_url(vehicle.street),
            offset=vehicle.offset,
            routeRemaining=len(vehicle.route),
        )

    # ------------------------------------------------------------------
    # Kinematics
    # ------------------------------------------------------------------

    def _new_speed(self, vehicle: VehicleState, action: str, limit: float) -> float:
        dt = self.params.tick_seconds
        speed = vehicle.speed
        if action == "accelerate":
            speed = min(speed + self.params.accel * dt, limit)
        elif action == "decelerate":
            speed = max(speed - self.params.decel * dt, 0.0)
        return min(speed, limit)

    def step(self, tick: int, actions: Dict[str, str]) -> Tuple[Dict[str, str], List[str]]:
        """
        Advance every vehicle by one tick.

        Longitudinal updates run first (streets in sorted order, vehicles front
        to back, each clamped behind its already-moved leader); crossings are
        resolved afterwards for the front vehicle of each street that was
        already waiting at the stop line.

        Args:
            tick: Current tick
            actions: One action per hosted vehicle

        Returns:
            (event per agent, ids of vehicles arriving at their destination)
        """
        dt = self.params.tick_seconds
        gap_min = self.params.gap_min
        waiting = {
            v.agent_id for v in self.vehicles.values()
            if v.offset == self.streets[v.street].length
        }
        events: Dict[str, str] = {}

        occupied = sorted({v.street for v in self.vehicles.values()})
        for street_id in occupied:
            street = self.streets[street_id]
            leader_offset: Optional[float] = None
            for vehicle in self.vehicles_on(street_id):
                speed = self._new_speed(vehicle, actions.get(vehicle.agent_id, self.default_action), street.speed_limit)
                offset = vehicle.offset + speed * dt
                if leader_offset is not None:
                    offset = min(offset, leader_offset - gap_min)
                if offset >= street.length:
                    offset = street.length
                    speed = 0.0
                vehicle.offset = offset
                vehicle.speed = speed
                leader_offset = offset
                events[vehicle.agent_id] = "moved"

        arrivals: List[str] = []
        for street_id in occupied:
            street = self.streets[street_id]
            queue = self.vehicles_on(street_id)
            if not queue:
                continue
            front = queue[0]
            if front.agent_id not in waiting or front.offset != street.length:
                continue
            light = self.lights.get(street.to)
            if actions.get(front.agent_id) != "move" or (light is not None and light.green != street_id):
                events[front.agent_id] = "blocked"
                continue
            if not front.route:
                if front.destination_place in self.attachments[street.to]:
                    events[front.agent_id] = "arrived"
                    arrivals.append(front.agent_id)
                else:
                    events[front.agent_id] = "blocked"
                continue
            next_id = front.route[0]
            if not self.entry_free(next_id):
                events[front.agent_id] = "blocked"
                continue
            front.street = next_id
            front.offset = 0.0
            front.speed = min(front.speed, self.streets[next_id].speed_limit)
            front.route.pop(0)
            events[front.agent_id] = "crossed"
        return events, arrivals

    def check_invariants(self) -> None:
        """Gap safety, speed ceilings and offset bounds over every street."""
        gap_min = self.params.gap_min
        for street_id, street in self.streets.items():
            queue = self.vehicles_on(street_id)
            for vehicle in queue:
                if vehicle.offset < -EPS or vehicle.offset > street.length + EPS:
                    raise InvariantBreach(f"{vehicle.agent_id} at offset {vehicle.offset} outside street {street_id}")
                if vehicle.speed < -EPS or vehicle.speed > street.speed_limit + EPS:
                    raise InvariantBreach(f"{vehicle.agent_id} at speed {vehicle.speed} on street {street_id}")
            for ahead, behind in zip(queue, queue[1:]):
                if ahead.offset - behind.offset < gap_min - EPS:
                    raise InvariantBreach(
                        f"{behind.agent_id} within {ahead.offset - behind.offset} m of {ahead.agent_id} on {street_id}"
                    )

    # ------------------------------------------------------------------
    # Tick phases
    # ------------------------------------------------------------------

    def apply_actions(self, tick: int, actions: Dict[str, str]) -> List[MigrationIntent]:
        events, arrivals = self.step(tick, actions)
        self._tick_entries = {
            v.agent_id: TrajectoryEntry(tick, v.agent_id, v.street, v.offset, v.speed, events.get(v.agent_id, "moved"))
            for v in self.vehicles.values()
        }
        intents = []
        for agent_id in arrivals:
            vehicle = self.vehicles[agent_id]
            attributes = {**self.bodies[agent_id].attributes, "arriveTick": tick}
            intents.append(MigrationIntent(agent_id, vehicle.destination_place, attributes))
        return intents

    def after_migration(self, intent: MigrationIntent, moved: bool, tick: int) -> None:
        if not moved:
            self._tick_entries[intent.agent_id].event = "blocked"
            return
        attributes = intent.attributes
        trip = TripRecord(
            agent_id=intent.agent_id,
            direction=attributes.get("direction", ""),
            depart_tick=int(attributes.get("departTick", tick)),
            arrive_tick=tick,
            route=list(attributes.get("route", [])),
        )
        self.trips.append(trip)
        logger.info("trip_completed", agent_id=trip.agent_id, direction=trip.direction,
                    depart_tick=trip.depart_tick, arrive_tick=tick)

    def finish_tick(self, tick: int) -> None:
        self.check_invariants()
        for agent_id, vehicle in self.vehicles.items():
            street = self.streets[vehicle.street]
            body = self.bodies.get(agent_id)
            if body is not None:
                at_stop_line = vehicle.offset == street.length
                body.resource = self.junction_url(street.to) if at_stop_line else self.street_url(street.id)
        self.trajectory.write_tick(self._tick_entries.values())
        self._tick_entries = {}

    # ------------------------------------------------------------------
    # Lights and routes
    # ------------------------------------------------------------------

    def set_light(self, junction_id: str, green: str) -> Dict[str, Any]:
        with self._lock:
            if junction_id not in self.junctions:
                raise ServiceError(404, f"Unknown junction '{junction_id}'")
            light = self.lights.get(junction_id)
            if light is None:
                raise ServiceError(400, f"Junction '{junction_id}' has no light")
            if green not in self.scenario.incoming(junction_id):
                raise ServiceError(400, f"Street '{green}' is not an approach of '{junction_id}'")
            light.green = green
            return {"junction": junction_id, "green": green}

    def route_document(self, origin: str, destination: str) -> Dict[str, Any]:
        try:
            route = self.graph.shortest_route(origin, destination)
        except NoRoute as e:
            raise ServiceError(404, str(e)) from e
        return {
            "from": origin,
            "to": destination,
            "route": route,
            "freeFlowSeconds": self.graph.free_flow_time(route),
            "links": [self.street_url(street_id) for street_id in route],
        }

    # ------------------------------------------------------------------
    # Route handlers
    # ------------------------------------------------------------------

    def _street_document(self, street_id: str) -> Dict[str, Any]:
        street = self.streets[street_id]
        return {
            "id": street.id,
            "from": street.from_,
            "to": street.to,
            "length": street.length,
            "speedLimit": street.speed_limit,
            "url": self.street_url(street.id),
            "occupants": [
                {"agentId": v.agent_id, "offset": v.offset, "speed": v.speed}
                for v in self.vehicles_on(street_id)
            ],
            "links": {"from": self.junction_url(street.from_), "to": self.junction_url(street.to)},
        }

    def _junction_document(self, junction_id: str) -> Dict[str, Any]:
        junction = self.junctions[junction_id]
        incoming = self.scenario.incoming(junction_id)
        light = self.lights.get(junction_id)
        return {
            "id": junction.id,
            "hasLight": junction.has_light,
            "url": self.junction_url(junction.id),
            "light": light.green if light else None,
            "waiting": sorted(
                v.agent_id for v in self.vehicles.values()
                if v.street in incoming and v.offset == self.streets[v.street].length
            ),
            "links": {
                "incoming": [self.street_url(s) for s in incoming],
                "outgoing": [self.street_url(s) for s in self.scenario.outgoing(junction_id)],
                "places": sorted(self.attachments[junction_id]),
            },
        }

    def list_streets(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [self._street_document(s) for s in sorted(self.streets)]

    def get_street(self, request: ServiceRequest) -> Dict[str, Any]:
        street_id = request.path_params["street_id"]
        with self._lock:
            if street_id not in self.streets:
                raise ServiceError(404, f"Unknown street '{street_id}'")
            return self._street_document(street_id)

    def list_junctions(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [self._junction_document(j) for j in sorted(self.junctions)]

    def get_junction(self, request: ServiceRequest) -> Dict[str, Any]:
        junction_id = request.path_params["junction_id"]
        with self._lock:
            if junction_id not in self.junctions:
                raise ServiceError(404, f"Unknown junction '{junction_id}'")
            return self._junction_document(junction_id)

    def put_light(self, request: ServiceRequest) -> Dict[str, Any]:
        document = validate_document(LightRequest, request.body, "light")
        return self.set_light(request.path_params["junction_id"], document.green)

    def get_route(self, request: ServiceRequest) -> Dict[str, Any]:
        origin = request.query.get("from")
        destination = request.query.get("to")
        if not origin or not destination:
            raise ServiceError(400, "Query parameters 'from' and 'to' are required")
        return self.route_document(origin, destination)

    def list_trips(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [trip.to_wire() for trip in self.trips]

    def close(self) -> None:
        self.trajectory.close()
