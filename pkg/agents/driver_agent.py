"""
Driver Agent Service
Hosts the commuting driver agents, their notification resources and their decision policy.
"""

import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from core.errors import DriverFailure, ServiceError, StartupError, TransportError
from core.scenario import Scenario
from core.transport import BaseTransport, Reply, Service, ServiceRequest
from core.utils import setup_logging
from core.validation import AgentSchedule, ObservationPayload, validate_document

logger = setup_logging(__name__)


def decide(payload: ObservationPayload, schedule: AgentSchedule,
           tick_seconds: float = 1.0, gap_min: float = 5.0) -> str:
    """
    Choose an action for one observation.

    Args:
        payload: Environment state pushed to the agent
        schedule: Departure ticks of the agent
        tick_seconds: Simulated seconds per tick
        gap_min: Minimum gap kept to the vehicle ahead

    Returns:
        Action label from the vocabulary of the observing environment

    Raises:
        DriverFailure: If the observation type is unknown
    """
    if payload.type == "traffic":
        if payload.at_intersection:
            return "move"
        speed = payload.vehicle_speed
        gap = payload.gap_ahead
        travel = speed * tick_seconds
        if speed < payload.speed_limit and (gap is None or gap > travel + gap_min):
            return "accelerate"
        if gap is not None and gap < travel:
            return "decelerate"
        return "maintain"
    if payload.type == "home":
        return "depart" if payload.time >= schedule.depart_home_tick else "continue"
    if payload.type == "work":
        return "depart" if payload.time >= schedule.depart_work_tick else "continue"
    raise DriverFailure(f"Unknown observation type '{payload.type}'")


@dataclass
class DriverAgent:
    """One commuter and its notification resource."""
    agent_id: str
    schedule: AgentSchedule
    notification_url: str
    last_observation: Optional[Dict[str, Any]] = None
    failed: bool = False
    visited_work: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def to_wire(self) -> Dict[str, Any]:
        return {
            "agentId": self.agent_id,
            "notifications": self.notification_url,
            "schedule": self.schedule.to_wire(),
            "failed": self.failed,
        }


class DriverAgentService(Service):
    """Passive agents: they act only when a notification arrives."""

    ROUTES = [
        ("GET", "/agents", "list_agents"),
        ("POST", "/bootstrap", "post_bootstrap"),
        ("PUT", "/{agent_id}/notifications", "put_notification"),
        ("GET", "/{agent_id}/notifications", "get_notification"),
    ]

    def __init__(self, name: str, base_url: str, transport: BaseTransport,
                 scenario: Scenario, home_url: str, work_url: str):
        super().__init__(name, base_url, transport)
        self.scenario = scenario
        self.home_url = home_url.rstrip("/")
        self.work_url = work_url.rstrip("/")
        self.agents: Dict[str, DriverAgent] = {}

    def notification_path(self, agent_id: str) -> str:
        return f"/{agent_id}/notifications"

    def _agent(self, agent_id: str) -> DriverAgent:
        with self._lock:
            agent = self.agents.get(agent_id)
        if agent is None:
            raise ServiceError(404, f"Unknown agent '{agent_id}'")
        return agent

    # ------------------------------------------------------------------
    # Lifecycle
    # ------------------------------------------------------------------

    def bootstrap(self) -> List[str]:
        """
        Create every agent of the population and register its body at home.

        Returns:
            Registered agent ids in population order

        Raises:
            StartupError: If a home registration is not accepted
        """
        with self._lock:
            if self.agents:
                raise ServiceError(409, "Population already bootstrapped")
        registered = []
        for person in self.scenario.population:
            schedule = AgentSchedule(departHomeTick=person.depart_home_tick, departWorkTick=person.depart_work_tick)
            agent = DriverAgent(person.agent_id, schedule, self.url(self.notification_path(person.agent_id)))
            with self._lock:
                self.agents[agent.agent_id] = agent
            home_place = f"{self.home_url}/places/{person.home}"
            document = {
                "agentId": person.agent_id,
                "webhook": agent.notification_url,
                "resource": home_place,
                "attributes": {
                    "home": home_place,
                    "work": f"{self.work_url}/places/{person.work}",
                    "departHomeTick": person.depart_home_tick,
                    "departWorkTick": person.depart_work_tick,
                },
            }
            try:
                reply = self.transport.post(f"{self.home_url}/bodies", document)
            except TransportError as e:
                raise StartupError(f"Home service unreachable for '{person.agent_id}': {e}") from e
            if reply.status != 201:
                raise StartupError(f"Home rejected '{person.agent_id}': {reply.status} {reply.detail}")
            registered.append(person.agent_id)
        logger.info("drivers_bootstrapped", agents=len(registered))
        return registered

    # ------------------------------------------------------------------
    # Perceive, decide, act
    # ------------------------------------------------------------------

    def choose(self, agent: DriverAgent, payload: ObservationPayload) -> str:
        # Back home after the work stay: the day's commute is over.
        if payload.type == "work":
            agent.visited_work = True
        elif payload.type == "home" and agent.visited_work:
            return "continue"
        params = self.scenario.params
        return decide(payload, agent.schedule, params.tick_seconds, params.gap_min)

    def on_notification(self, agent_id: str, payload: ObservationPayload) -> Dict[str, Any]:
        """Decide on an observation and submit the action to the body webhook."""
        agent = self._agent(agent_id)
        with agent.lock:
            if agent.failed:
                raise ServiceError(500, f"Agent '{agent_id}' has failed")
            agent.last_observation = payload.to_wire()
            action = self.choose(agent, payload)
            try:
                reply = self.transport.put(payload.webhook, {"action": action, "forTick": payload.time})
            except TransportError as e:
                reply = Reply(599, {"detail": str(e)})
            if reply.status != 200:
                agent.failed = True
                logger.error(
                    "driver_failed", agent_id=agent_id, action=action, status=reply.status, detail=reply.detail
                )
                raise ServiceError(500, f"Action '{action}' of '{agent_id}' refused: {reply.status}")
        return {"agentId": agent_id, "time": payload.time, "action": action}

    # ------------------------------------------------------------------
    # Route handlers
    # ------------------------------------------------------------------

    def put_notification(self, request: ServiceRequest) -> Dict[str, Any]:
        agent_id = request.path_params["agent_id"]
        self._agent(agent_id)
        payload = validate_document(ObservationPayload, request.body, "observation")
        return self.on_notification(agent_id, payload)

    def get_notification(self, request: ServiceRequest) -> Dict[str, Any]:
        agent = self._agent(request.path_params["agent_id"])
        if agent.last_observation is None:
            raise ServiceError(404, f"Agent '{agent.agent_id}' has not been notified yet")
        return agent.last_observation

    def list_agents(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [self.agents[a].to_wire() for a in sorted(self.agents)]

    def post_bootstrap(self, request: ServiceRequest) -> Reply:
        return Reply(201, {"agents": self.bootstrap()})
