"""
Traffic light controller: drives the light phases of lit junctions every tick.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol

from core.errors import ConfigurationError, ServiceError, SimulationError, TransportError
from core.transport import BaseTransport, Service, ServiceRequest
from core.utils import last_segment, setup_logging
from core.validation import TimeMessage, validate_document

logger = setup_logging(__name__)


@dataclass
class CycleState:
    """Round-robin cycle of one controlled junction."""
    junction_id: str
    approaches: List[str]
    green_ticks: int

    def to_wire(self) -> Dict[str, Any]:
        return {"junction": self.junction_id, "approaches": list(self.approaches), "greenTicks": self.green_ticks}


class PhasePolicy(Protocol):
    """Chooses the green approach of a junction for a tick."""

    def phase_for(self, cycle: CycleState, tick: int) -> str:
        ...


class FixedCyclePolicy:
    """Each approach in sorted order is green for greenTicks consecutive ticks."""

    def phase_for(self, cycle: CycleState, tick: int) -> str:
        return cycle.approaches[(tick // cycle.green_ticks) % len(cycle.approaches)]


class TrafficLightController(Service):
    """Clock participant that sets every controlled light before vehicles move."""

    ROUTES = [
        ("PUT", "/clock", "on_clock"),
        ("GET", "/cycles", "list_cycles"),
    ]

    def __init__(self, name: str, base_url: str, transport: BaseTransport, road_url: str,
                 green_ticks: int, clock_url: Optional[str] = None,
                 policy: Optional[PhasePolicy] = None):
        super().__init__(name, base_url, transport)
        self.road_url = road_url.rstrip("/")
        self.green_ticks = green_ticks
        self.clock_url = clock_url.rstrip("/") if clock_url else None
        self.policy: PhasePolicy = policy or FixedCyclePolicy()
        self.cycles: Optional[List[CycleState]] = None

    def _request(self, method: str, url: str, body: Any = None) -> Any:
        try:
            reply = self.transport.request(method, url, body)
        except TransportError as e:
            raise ConfigurationError(f"{method} {url} failed: {e}") from e
        if not reply.ok:
            raise ConfigurationError(f"{method} {url} answered {reply.status}: {reply.detail}")
        return reply.body

    def discover(self) -> List[CycleState]:
        """Read the lit junctions and their approaches from the road network."""
        cycles = []
        for junction in self._request("GET", f"{self.road_url}/junctions"):
            if not junction.get("hasLight"):
                continue
            approaches = sorted(last_segment(url) for url in junction["links"]["incoming"])
            if not approaches:
                raise ConfigurationError(f"Lit junction '{junction['id']}' has no approach")
            cycles.append(CycleState(junction["id"], approaches, self.green_ticks))
        logger.info("lights_discovered", junctions=[c.junction_id for c in cycles])
        return cycles

    def tick(self, tick: int) -> Dict[str, Any]:
        """PUT the phase of every controlled junction, then ack the clock."""
        if self.cycles is None:
            discovered = self.discover()
            with self._lock:
                self.cycles = discovered
        cycles = list(self.cycles)
        phases = {}
        for cycle in cycles:
            green = self.policy.phase_for(cycle, tick)
            self._request("PUT", f"{self.road_url}/junctions/{cycle.junction_id}/light", {"green": green})
            phases[cycle.junction_id] = green
        if self.clock_url:
            reply = self.transport.post(f"{self.clock_url}/participants/{self.name}/ack", {"time": tick})
            if not reply.ok:
                raise SimulationError(f"Clock refused ack of tick {tick} from {self.name}: {reply.status}")
        return {"time": tick, "phases": phases}

    def on_clock(self, request: ServiceRequest) -> Dict[str, Any]:
        message = validate_document(TimeMessage, request.body, "time broadcast")
        return self.tick(message.time)

    def list_cycles(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            if self.cycles is None:
                raise ServiceError(409, "Cycles not discovered before the first tick")
            return [cycle.to_wire() for cycle in self.cycles]
