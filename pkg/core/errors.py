"""
Exception hierarchy for the traffic simulation.
Every failure the services or the orchestrator can surface derives from SimulationError.
"""

from typing import Dict, Optional


class SimulationError(Exception):
    """Base class for all simulation failures."""


class ParseError(SimulationError):
    """The scenario document could not be read as structured text."""


class ValidationError(SimulationError):
    """A scenario or wire document broke an invariant."""

    def __init__(self, offending_id: str, message: str = ""):
        self.offending_id = offending_id
        super().__init__(message or offending_id)


class NoRoute(SimulationError):
    """The destination junction cannot be reached from the origin."""


class BrokenChain(SimulationError):
    """Consecutive streets of a route do not share a junction."""


class TransportError(SimulationError):
    """The target service could not be reached (refused, unknown host, timeout)."""


class ServiceError(SimulationError):
    """An HTTP-level rejection raised by a route handler."""

    def __init__(self, status: int, detail: str, headers: Optional[Dict[str, str]] = None):
        self.status = status
        self.detail = detail
        self.headers = headers or {}
        super().__init__(f"{status}: {detail}")


class AgentUnreachable(SimulationError):
    """An agent webhook failed every push attempt."""


class MigrationConflict(SimulationError):
    """The receiving service already hosts the agent with a different document."""


class MigrationError(SimulationError):
    """A body transfer failed for a reason other than a conflict or a deferral."""


class InvariantBreach(SimulationError):
    """Internal state violated a simulation invariant; the run must stop."""


class CensusFailure(InvariantBreach):
    """An agent was hosted by zero or several services at a tick boundary."""


class StartupError(SimulationError):
    """The service constellation could not be brought up or wired."""


class DriverFailure(SimulationError):
    """A driver agent's action submission was not accepted."""


class ConfigurationError(SimulationError):
    """A service was wired against a network that rejects its settings."""
