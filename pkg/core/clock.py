"""
Clock service: the discrete time model of the simulation.
A conservative barrier that broadcasts each tick and waits for every participant's ack.
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional

from core.errors import ServiceError, TransportError
from core.transport import BaseTransport, Reply, Service, ServiceRequest
from core.utils import setup_logging
from core.validation import ParticipantRequest, TimeMessage, validate_document

logger = setup_logging(__name__)


@dataclass
class Participant:
    """A registered environment service."""
    id: str
    callback: str

    def to_wire(self) -> Dict[str, str]:
        return {"id": self.id, "callback": self.callback, "participant": f"/participants/{self.id}"}


@dataclass
class ClockEvent:
    """One entry of the ordered broadcast/ack log."""
    seq: int
    kind: str
    participant: str
    time: int

    def to_wire(self) -> Dict[str, Any]:
        return {"seq": self.seq, "kind": self.kind, "participant": self.participant, "time": self.time}


class ClockService(Service):
    """Barrier-synchronised tick broadcaster."""

    ROUTES = [
        ("GET", "/time", "get_time"),
        ("POST", "/participants", "post_participant"),
        ("GET", "/participants", "list_participants"),
        ("POST", "/participants/{participant_id}/ack", "post_ack"),
        ("POST", "/start", "post_start"),
        ("POST", "/advance", "post_advance"),
        ("GET", "/barrier", "get_barrier"),
        ("GET", "/events", "get_events"),
    ]

    def __init__(self, name: str, base_url: str, transport: BaseTransport,
                 max_ticks: Optional[int] = None):
        super().__init__(name, base_url, transport)
        self.max_ticks = max_ticks
        self.current_tick = 0
        self.started = False
        self.participants: List[Participant] = []
        self.acked: set = set()
        self.events: List[ClockEvent] = []

    # ------------------------------------------------------------------
    # Barrier operations
    # ------------------------------------------------------------------

    def _record(self, kind: str, participant: str, time: int) -> None:
        self.events.append(ClockEvent(len(self.events), kind, participant, time))

    def register_participant(self, participant_id: str, callback: str) -> Participant:
        with self._lock:
            if self.started:
                raise ServiceError(403, "Simulation already started")
            if any(p.id == participant_id for p in self.participants):
                raise ServiceError(409, f"Participant '{participant_id}' already registered")
            participant = Participant(participant_id, callback)
            self.participants.append(participant)
        logger.info("participant_registered", participant=participant_id, callback=callback)
        return participant

    def barrier_complete(self) -> bool:
        with self._lock:
            return self.acked >= {p.id for p in self.participants}

    def ack(self, participant_id: str, tick: int) -> Dict[str, Any]:
        """Record that a participant finished its work for a tick."""
        with self._lock:
            if not any(p.id == participant_id for p in self.participants):
                raise ServiceError(404, f"Unknown participant '{participant_id}'")
            if not self.started or tick != self.current_tick:
                raise ServiceError(409, f"Ack for tick {tick}, current tick is {self.current_tick}")
            self.acked.add(participant_id)
            self._record("ack", participant_id, tick)
            return {"participant": participant_id, "time": tick}

    def _broadcast(self, tick: int) -> None:
        """PUT the tick to every participant in registration order; no lock is held."""
        with self._lock:
            targets = list(self.participants)
        for participant in targets:
            with self._lock:
                self._record("broadcast", participant.id, tick)
            try:
                reply = self.transport.put(participant.callback, {"time": tick})
            except TransportError as e:
                raise ServiceError(502, f"Participant '{participant.id}' unreachable: {e}") from e
            if not reply.ok:
                raise ServiceError(
                    502, f"Participant '{participant.id}' failed tick {tick}: {reply.status} {reply.detail}"
                )

    def start(self) -> Dict[str, Any]:
        with self._lock:
            if self.started:
                raise ServiceError(409, "Simulation already started")
            self.started = True
            self.acked = set()
        logger.info("clock_started", participants=len(self.participants))
        self._broadcast(0)
        return {"time": 0, "complete": self.barrier_complete()}

    def advance(self) -> Dict[str, Any]:
        """
        Move to the next tick once the barrier for the current one is complete.

        Returns:
            Mapping with the current time, whether it advanced, whether the
            new barrier is already complete, and exhausted when maxTicks is hit
        """
        with self._lock:
            if not self.started:
                raise ServiceError(409, "Simulation not started")
            if not self.barrier_complete():
                return {"time": self.current_tick, "advanced": False, "complete": False}
            if self.max_ticks is not None and self.current_tick + 1 >= self.max_ticks:
                return {"time": self.current_tick, "advanced": False, "complete": True, "exhausted": True}
            self.current_tick += 1
            self.acked = set()
            tick = self.current_tick
        self._broadcast(tick)
        return {"time": tick, "advanced": True, "complete": self.barrier_complete()}

    # ------------------------------------------------------------------
    # Route handlers
    # ------------------------------------------------------------------

    def get_time(self, request: ServiceRequest) -> Dict[str, int]:
        return {"time": self.current_tick}

    def post_participant(self, request: ServiceRequest) -> Reply:
        document = validate_document(ParticipantRequest, request.body, "participant")
        participant = self.register_participant(document.id, document.callback)
        path = f"/participants/{participant.id}"
        return Reply(201, {**participant.to_wire(), "url": self.url(path)}, {"Location": path})

    def list_participants(self, request: ServiceRequest) -> List[Dict[str, str]]:
        with self._lock:
            return [p.to_wire() for p in self.participants]

    def post_ack(self, request: ServiceRequest) -> Dict[str, Any]:
        message = validate_document(TimeMessage, request.body, "ack")
        return self.ack(request.path_params["participant_id"], message.time)

    def post_start(self, request: ServiceRequest) -> Dict[str, Any]:
        return self.start()

    def post_advance(self, request: ServiceRequest) -> Dict[str, Any]:
        return self.advance()

    def get_barrier(self, request: ServiceRequest) -> Dict[str, Any]:
        with self._lock:
            return {
                "time": self.current_tick,
                "started": self.started,
                "participants": [p.id for p in self.participants],
                "acked": sorted(self.acked),
            }

    def get_events(self, request: ServiceRequest) -> List[Dict[str, Any]]:
        with self._lock:
            return [event.to_wire() for event in self.events]


def lockstep_violations(events: Iterable[Dict[str, Any]], participants: Iterable[str]) -> List[str]:
    """
    Scan an ordered clock event log for broadcasts issued ahead of the barrier.

    Args:
        events: Event documents in log order (kind, participant, time)
        participants: Ids of every registered participant

    Returns:
        One message per tick-(t+1) broadcast emitted before all tick-t acks
    """
    expected = set(participants)
    acks: Dict[int, set] = {}
    violations: List[str] = []
    for event in events:
        tick = int(event["time"])
        if event["kind"] == "ack":
            acks.setdefault(tick, set()).add(event["participant"])
        elif event["kind"] == "broadcast" and tick > 0:
            missing = expected - acks.get(tick - 1, set())
            if missing:
                violations.append(
                    f"broadcast of tick {tick} to {event['participant']} before acks from {sorted(missing)}"
                )
    return violations
