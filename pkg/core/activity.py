"""
Activity service: hosts the home or work Places of a scenario.
Pushes time-plus-activity observations and launches departing drivers onto the road network.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional

from core.body_protocol import AgentBody, EnvironmentService, MigrationIntent
from core.errors import MigrationError, ServiceError, TransportError
from core.scenario import Scenario
from core.transport import BaseTransport, ServiceRequest
from core.utils import setup_logging, split_url
from core.validation import ObservationPayload, RegistrationRequest

logger = setup_logging(__name__)

PLACE_ACTIONS = frozenset({"continue", "depart"})
DIRECTIONS = {"home": "home->work", "work": "work->home"}


@dataclass
class Occupancy:
    """Who occupies a Place and the route planned for their departure."""
    place_id: str
    occupant: Optional[str] = None
    planned_route: Optional[List[str]] = None
    depart_tick: Optional[int] = None


class ActivityService(EnvironmentService):
    """Environment service for one kind of Place (home or work)."""

    ROUTES = [
        ("GET", "/places", "list_places"),
        ("GET", "/places/{place_id}", "get_place"),
    ]

    vocabulary = PLACE_ACTIONS
    default_action = "continue"

    def __init__(self, kind: str, name: str, base_url: str, transport: BaseTransport,
                 scenario: Scenario, road_url: str, clock_url: Optional[str] = None,
                 push_attempts: Optional[int] = None, faults: Iterable[str] = ()):
        if kind not in DIRECTIONS:
            raise ValueError(f"Unknown place kind: {kind}")
        super().__init__(name, base_url, transport, clock_url, push_attempts, faults)
        self.kind = kind
        self.road_url = road_url.rstrip("/")
        self.places = scenario.place_map(kind)
        self.occupancy: Dict[str, Occupancy] = {place_id: Occupancy(place_id) for place_id in self.places}
        self.place_of: Dict[str, str] = {}

    def place_url(self, place_id: str) -> str:
        return self.url(f"/places/{place_id}")

    def junction_link(self, place_id: str) -> str:
        return f"{self.road_url}/junctions/{self.places[place_id].junction}"

    def resolve_resource(self, uri: str) -> Optional[str]:
        path = uri
        if "://" in uri:
            base, path = split_url(uri)
            if base != self.base_url:
                return None
        parts = path.strip("/").split("/")
        if len(parts) == 2 and parts[0] == "places" and parts[1] in self.places:
            return self.place_url(parts[1])
        return None

    def _place_id(self, resource: str) -> str:
        return resource.rstrip("/").rsplit("/", 1)[-1]

    # ------------------------------------------------------------------
    # Body hooks
    # ------------------------------------------------------------------

    def check_capacity(self, resource: str, request: RegistrationRequest) -> None:
        occupancy = self.occupancy[self._place_id(resource)]
        if occupancy.occupant is not None:
            raise ServiceError(403, f"Place '{occupancy.place_id}' is occupied by '{occupancy.occupant}'")

    def on_body_created(self, body: AgentBody, request: RegistrationRequest) -> None:
        place_id = self._place_id(body.resource)
        self.occupancy[place_id] = Occupancy(place_id, occupant=body.agent_id)
        self.place_of[body.agent_id] = place_id

    def on_body_removed(self, body: AgentBody) -> None:
        place_id = self.place_of.pop(body.agent_id, None)
        if place_id is not None:
            self.occupancy[place_id] = Occupancy(place_id)

    def build_observation(self, body: AgentBody, tick: int) -> ObservationPayload:
        place = self.places[self.place_of[body.agent_id]]
        return ObservationPayload(
            type=self.kind,
            time=tick,
            webhook=self.action_url(body.agent_id),
            activity=place.activity,
        )

    def apply_actions(self, tick: int, actions: Dict[str, str]) -> List[MigrationIntent]:
        return [
            MigrationIntent(agent_id, context=self.place_of[agent_id])
            for agent_id, action in sorted(actions.items())
            if action == "depart"
        ]

    # ------------------------------------------------------------------
    # Departure
    # ------------------------------------------------------------------

    def _fetch(self, url: str, params: Optional[Dict[str, Any]] = None) -> Any:
        try:
            reply = self.transport.get(url, params=params)
        except TransportError as e:
            raise MigrationError(f"Cannot plan departure: {e}") from e
        if not reply.ok:
            raise MigrationError(f"Cannot plan departure: GET {url} answered {reply.status} {reply.detail}")
        return reply.body

    def plan_route(self, place_id: str, destination: str) -> List[str]:
        """
        Route from a local Place to a destination Place on the road network.

        The destination junction is read through the destination Place's
        hypermedia link; the route comes from the road service behind the
        origin Place's junction link.
        """
        destination_junction = self._fetch(destination)["links"]["junction"]
        origin_junction = self.junction_link(place_id)
        road_base, _ = split_url(origin_junction)
        document = self._fetch(
            f"{road_base}/routes",
            params={"from": origin_junction.rsplit("/", 1)[-1], "to": destination_junction.rsplit("/", 1)[-1]},
        )
        return list(document["route"])

    def prepare_migration(self, intent: MigrationIntent, tick: int) -> None:
        place_id = intent.context
        with self._lock:
            attributes = dict(self.bodies[intent.agent_id].attributes)
            occupancy = self.occupancy[place_id]
            cached = occupancy.planned_route
        destination = attributes.get("work" if self.kind == "home" else "home")
        if not destination:
            raise MigrationError(f"Agent '{intent.agent_id}' carries no destination Place")

        route = cached if cached is not None else self.plan_route(place_id, destination)
        with self._lock:
            occupancy.planned_route = route
            if occupancy.depart_tick is None:
                occupancy.depart_tick = tick

        attributes.pop("arriveTick", None)
        attributes.update({
            "route": route,
            "destinationPlace": destination,
            "origin": self.place_url(place_id),
            "direction": DIRECTIONS[self.kind],
            "departTick": tick,
        })
        intent.target_resource = f"{self.road_url}/streets/{route[0]}"
        intent.attributes = attributes

    def after_migration(self, intent: MigrationIntent, moved: bool, tick: int) -> None:
        if moved:
            logger.info("driver_departed", service=self.name, agent_id=intent.agent_id, tick=tick)
        else:
            logger.info("departure_retained", service=self.name, agent_id=intent.agent_id, tick=tick)

    # ------------------------------------------------------------------
    # Route handlers
    # ------------------------------------------------------------------

    def _place_document(self, place_id: str) -> Dict[str, Any]:
        place = self.places[place_id]
        return {
            "id": place.id,
            "kind": self.kind,
            "activity": place.activity,
            "junction": place.junction,
            "url": self.place_url(place.id),
            "occupant": self.occupancy[place_id].occupant,
            "links": {"junction": self.junction_link(place_id)},
        }

    def list_places(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [self._place_document(p) for p in sorted(self.places)]

    def get_place(self, request: ServiceRequest) -> Dict[str, Any]:
        place_id = request.path_params["place_id"]
        with self._lock:
            if place_id not in self.places:
                raise ServiceError(404, f"Unknown place '{place_id}'")
            return self._place_document(place_id)
