"""
Agent-body lifecycle shared by every environment service.

Registration with accept/reject, observation push to agent webhooks, action
intake, and cross-service body migration. Subclasses supply the resources,
observations and the effect of actions; the tick phases live here.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional

from core.config import config
from core.errors import (
    AgentUnreachable,
    InvariantBreach,
    MigrationConflict,
    MigrationError,
    ServiceError,
    SimulationError,
    TransportError,
)
from core.transport import BaseTransport, Reply, Service, ServiceRequest
from core.utils import setup_logging, split_url
from core.validation import (
    ActionRequest,
    MigrationDocument,
    ObservationPayload,
    RegistrationRequest,
    TimeMessage,
    validate_document,
)

logger = setup_logging(__name__)

KEEP_MIGRATED_BODIES = "keep-migrated-bodies"


@dataclass
class AgentBody:
    """Service-side avatar of one agent."""
    agent_id: str
    webhook: str
    resource: str
    attributes: Dict[str, Any] = field(default_factory=dict)
    pending_action: Optional[str] = None
    inert: bool = False
    arrival_document: Optional[Dict[str, Any]] = None

    def to_document(self, body_url: str) -> Dict[str, Any]:
        return {
            "agentId": self.agent_id,
            "webhook": self.webhook,
            "resource": self.resource,
            "attributes": self.attributes,
            "pendingAction": self.pending_action,
            "links": {"self": body_url, "action": f"{body_url}/action"},
        }


@dataclass
class MigrationIntent:
    """A body the tick decided to hand over to another service."""
    agent_id: str
    target_resource: Optional[str] = None
    attributes: Dict[str, Any] = field(default_factory=dict)
    context: Any = None


class EnvironmentService(Service):
    """Base class for services hosting agent bodies on their resources."""

    ROUTES = [
        ("POST", "/bodies", "post_body"),
        ("GET", "/bodies", "list_bodies"),
        ("GET", "/bodies/{agent_id}", "get_body"),
        ("PUT", "/bodies/{agent_id}/action", "put_action"),
        ("DELETE", "/bodies/{agent_id}", "delete_body"),
        ("PUT", "/clock", "on_clock"),
    ]

    vocabulary: FrozenSet[str] = frozenset()
    default_action: str = ""

    def __init__(self, name: str, base_url: str, transport: BaseTransport,
                 clock_url: Optional[str] = None, push_attempts: Optional[int] = None,
                 faults: Iterable[str] = ()):
        super().__init__(name, base_url, transport)
        self.clock_url = clock_url.rstrip("/") if clock_url else None
        self.push_attempts = push_attempts or config.push_attempts
        self.faults = frozenset(faults)
        self.bodies: Dict[str, AgentBody] = {}
        self.gone: set = set()
        self.current_tick = 0
        self.last_processed_tick = -1
        self.action_log: List[tuple] = []

    # ------------------------------------------------------------------
    # Hooks for concrete services
    # ------------------------------------------------------------------

    def resolve_resource(self, uri: str) -> Optional[str]:
        """Canonical absolute URL of a locally hosted resource, or None."""
        raise NotImplementedError

    def check_capacity(self, resource: str, request: RegistrationRequest) -> None:
        """Raise ServiceError (403 or 503) when the resource cannot take the body."""

    def on_body_created(self, body: AgentBody, request: RegistrationRequest) -> None:
        """Attach domain state to a newly accepted body."""

    def on_body_removed(self, body: AgentBody) -> None:
        """Detach domain state from a body that left or was deleted."""

    def build_observation(self, body: AgentBody, tick: int) -> ObservationPayload:
        raise NotImplementedError

    def apply_actions(self, tick: int, actions: Dict[str, str]) -> List[MigrationIntent]:
        """Single-writer phase: apply one action per body, return bodies leaving."""
        return []

    def prepare_migration(self, intent: MigrationIntent, tick: int) -> None:
        """Fill the target and attributes of an intent; may call other services."""

    def after_migration(self, intent: MigrationIntent, moved: bool, tick: int) -> None:
        """React to the outcome of a hand-over."""

    def finish_tick(self, tick: int) -> None:
        """Last step of a tick before the clock ack."""

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def body_path(self, agent_id: str) -> str:
        return f"/bodies/{agent_id}"

    def action_url(self, agent_id: str) -> str:
        return self.url(f"{self.body_path(agent_id)}/action")

    def _body_or_error(self, agent_id: str) -> AgentBody:
        body = self.bodies.get(agent_id)
        if body is not None:
            return body
        if agent_id in self.gone:
            raise ServiceError(410, f"Body '{agent_id}' is gone")
        raise ServiceError(404, f"Unknown body '{agent_id}'")

    def _created(self, body: AgentBody) -> Reply:
        path = self.body_path(body.agent_id)
        return Reply(
            201,
            {"agentId": body.agent_id, "body": path, "url": self.url(path), "resource": body.resource},
            {"Location": path},
        )

    def census(self) -> List[Dict[str, str]]:
        with self._lock:
            return [
                {"agentId": agent_id, "resource": self.bodies[agent_id].resource}
                for agent_id in sorted(self.bodies)
            ]

    # ------------------------------------------------------------------
    # Registration and migration intake
    # ------------------------------------------------------------------

    def register_body(self, request: RegistrationRequest) -> Reply:
        """Accept or reject a new body bound to one of our resources."""
        with self._lock:
            resource = self.resolve_resource(request.resource or "")
            if resource is None:
                raise ServiceError(404, f"Unknown resource '{request.resource}'")
            if request.agent_id in self.bodies:
                raise ServiceError(409, f"Agent '{request.agent_id}' already hosted")
            self.check_capacity(resource, request)
            body = AgentBody(request.agent_id, request.webhook, resource, dict(request.attributes))
            self.on_body_created(body, request)
            self.bodies[body.agent_id] = body
            self.gone.discard(body.agent_id)
        logger.debug("body_registered", service=self.name, agent_id=body.agent_id, resource=resource)
        return self._created(body)

    def accept_migration(self, document: MigrationDocument) -> Reply:
        """Host a body handed over by another service; duplicates of the same document are idempotent."""
        wire = document.to_wire()
        with self._lock:
            existing = self.bodies.get(document.agent_id)
            if existing is not None:
                if existing.arrival_document == wire:
                    return self._created(existing)
                raise ServiceError(409, f"Agent '{document.agent_id}' already hosted with a different document")
            resource = self.resolve_resource(document.target_resource)
            if resource is None:
                raise ServiceError(404, f"Unknown resource '{document.target_resource}'")
            request = RegistrationRequest(
                agentId=document.agent_id, webhook=document.webhook,
                targetResource=document.target_resource, attributes=document.attributes,
            )
            self.check_capacity(resource, request)
            body = AgentBody(
                document.agent_id, document.webhook, resource,
                dict(document.attributes), arrival_document=wire,
            )
            self.on_body_created(body, request)
            self.bodies[body.agent_id] = body
            self.gone.discard(body.agent_id)
        logger.debug("body_migrated_in", service=self.name, agent_id=body.agent_id, resource=resource)
        return self._created(body)

    def migrate_out(self, agent_id: str, target_resource: str, attributes: Dict[str, Any]) -> bool:
        """
        Hand a body over to the service hosting target_resource.

        Args:
            agent_id: Body to transfer
            target_resource: Absolute URL of the resource on the receiving service
            attributes: Attribute bag carried with the body

        Returns:
            True when the receiver accepted (the local body is gone), False when deferred

        Raises:
            MigrationConflict: If the receiver hosts the agent with a different document
            MigrationError: On any other rejection or when the receiver stays unreachable
        """
        with self._lock:
            body = self._body_or_error(agent_id)
            document = MigrationDocument(
                agentId=agent_id, webhook=body.webhook,
                attributes=attributes, targetResource=target_resource,
            )
        target_base, _ = split_url(target_resource)

        reply = None
        for attempt in range(1, self.push_attempts + 1):
            try:
                reply = self.transport.post(f"{target_base}/bodies", document.to_wire())
                break
            except TransportError as e:
                logger.warning("migration_retry", service=self.name, agent_id=agent_id, attempt=attempt, error=str(e))
        if reply is None:
            raise MigrationError(f"Receiver {target_base} unreachable for '{agent_id}'")

        if reply.status == 201:
            if KEEP_MIGRATED_BODIES not in self.faults:
                self._remove_body(agent_id)
            logger.debug("body_migrated_out", service=self.name, agent_id=agent_id, target=target_resource)
            return True
        if reply.status in (403, 503):
            logger.info("migration_deferred", service=self.name, agent_id=agent_id, status=reply.status)
            return False
        if reply.status == 409:
            raise MigrationConflict(f"{target_base} rejected '{agent_id}': {reply.detail}")
        raise MigrationError(f"{target_base} answered {reply.status} for '{agent_id}': {reply.detail}")

    def _remove_body(self, agent_id: str) -> None:
        with self._lock:
            body = self.bodies.pop(agent_id, None)
            if body is not None:
                self.gone.add(agent_id)
                self.on_body_removed(body)

    # ------------------------------------------------------------------
    # Actions and observations
    # ------------------------------------------------------------------

    def submit_action(self, agent_id: str, request: ActionRequest) -> Dict[str, Any]:
        """Queue an action for the current tick; later submissions overwrite."""
        with self._lock:
            body = self._body_or_error(agent_id)
            if request.action not in self.vocabulary:
                raise ServiceError(400, f"Action '{request.action}' not in {sorted(self.vocabulary)}")
            if request.for_tick != self.current_tick:
                raise ServiceError(
                    409, f"Stale action for tick {request.for_tick}, current tick is {self.current_tick}"
                )
            body.pending_action = request.action
        return {"agentId": agent_id, "action": request.action, "forTick": request.for_tick}

    def push_observation(self, body: AgentBody, payload: ObservationPayload) -> None:
        """
        PUT an observation to the agent webhook.

        Raises:
            InvariantBreach: If the payload is not for the current tick
            AgentUnreachable: After every attempt failed
        """
        if payload.time != self.current_tick:
            raise InvariantBreach(f"Observation for tick {payload.time} during tick {self.current_tick}")
        for attempt in range(1, self.push_attempts + 1):
            try:
                reply = self.transport.put(body.webhook, payload.to_wire())
            except TransportError as e:
                logger.debug("push_failed", service=self.name, agent_id=body.agent_id, attempt=attempt, error=str(e))
                continue
            if reply.status == 200:
                return
            logger.debug(
                "push_rejected", service=self.name, agent_id=body.agent_id, attempt=attempt, status=reply.status
            )
        raise AgentUnreachable(body.agent_id)

    # ------------------------------------------------------------------
    # Tick phases
    # ------------------------------------------------------------------

    def run_tick(self, tick: int) -> Dict[str, Any]:
        """Process one clock broadcast from observations to the clock ack."""
        with self._lock:
            if tick <= self.last_processed_tick:
                raise ServiceError(409, f"Tick {tick} already processed")
            if self.last_processed_tick >= 0 and tick != self.last_processed_tick + 1:
                raise ServiceError(409, f"Tick {tick} skips ahead of {self.last_processed_tick + 1}")
            self.current_tick = tick
            for body in self.bodies.values():
                body.pending_action = None
                body.inert = False
            outbound = [
                (self.bodies[agent_id], self.build_observation(self.bodies[agent_id], tick))
                for agent_id in sorted(self.bodies)
            ]

        for body, payload in outbound:
            try:
                self.push_observation(body, payload)
            except AgentUnreachable:
                logger.warning("agent_inert", service=self.name, agent_id=body.agent_id, tick=tick)
                body.inert = True

        with self._lock:
            actions: Dict[str, str] = {}
            for agent_id in sorted(self.bodies):
                body = self.bodies[agent_id]
                action = body.pending_action if (body.pending_action and not body.inert) else self.default_action
                actions[agent_id] = action
                self.action_log.append((tick, agent_id, action))
            intents = self.apply_actions(tick, actions)

        for intent in intents:
            self.prepare_migration(intent, tick)
            moved = False
            if intent.target_resource:
                moved = self.migrate_out(intent.agent_id, intent.target_resource, intent.attributes)
            with self._lock:
                self.after_migration(intent, moved, tick)

        with self._lock:
            self.finish_tick(tick)
            self.last_processed_tick = tick

        acked = self.ack_clock(tick)
        logger.debug("tick_processed", service=self.name, tick=tick, bodies=len(self.bodies), migrations=len(intents))
        return {"time": tick, "acked": acked}

    def ack_clock(self, tick: int) -> bool:
        if not self.clock_url:
            return False
        reply = self.transport.post(f"{self.clock_url}/participants/{self.name}/ack", {"time": tick})
        if not reply.ok:
            raise SimulationError(f"Clock refused ack of tick {tick} from {self.name}: {reply.status} {reply.detail}")
        return True

    # ------------------------------------------------------------------
    # Route handlers
    # ------------------------------------------------------------------

    def post_body(self, request: ServiceRequest) -> Reply:
        document = validate_document(RegistrationRequest, request.body, "registration")
        if document.is_migration:
            return self.accept_migration(MigrationDocument(
                agentId=document.agent_id, webhook=document.webhook,
                attributes=document.attributes, targetResource=document.target_resource,
            ))
        return self.register_body(document)

    def list_bodies(self, request: ServiceRequest) -> List[Dict[str, str]]:
        return self.census()

    def get_body(self, request: ServiceRequest) -> Dict[str, Any]:
        agent_id = request.path_params["agent_id"]
        with self._lock:
            body = self._body_or_error(agent_id)
            return body.to_document(self.url(self.body_path(agent_id)))

    def put_action(self, request: ServiceRequest) -> Dict[str, Any]:
        agent_id = request.path_params["agent_id"]
        with self._lock:
            self._body_or_error(agent_id)
        action = validate_document(ActionRequest, request.body, "action")
        return self.submit_action(agent_id, action)

    def delete_body(self, request: ServiceRequest) -> Reply:
        agent_id = request.path_params["agent_id"]
        with self._lock:
            self._body_or_error(agent_id)
            self._remove_body(agent_id)
        return Reply(204)

    def on_clock(self, request: ServiceRequest) -> Dict[str, Any]:
        message = validate_document(TimeMessage, request.body, "time broadcast")
        return self.run_tick(message.time)
