"""
Validation module for the commuter traffic simulation using Pydantic.
Ensures proper schema enforcement for every document exchanged between services.
"""

from typing import Any, Dict, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ServiceError
from core.utils import setup_logging

logger = setup_logging(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


class WireModel(BaseModel):
    """Base for documents sent over the wire: camelCase keys, no unknown keys."""
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    def to_wire(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True, exclude_none=True)


# ============================================================================
# BODY PROTOCOL DOCUMENTS
# ============================================================================

class RegistrationRequest(WireModel):
    """Schema for POST /bodies: a registration, or a migration when targetResource is set."""
    agent_id: str = Field(..., alias="agentId", min_length=1, description="Agent identity")
    webhook: str = Field(..., min_length=1, description="Absolute URL of the agent notification resource")
    resource: Optional[str] = Field(None, description="Resource to inhabit (registration)")
    target_resource: Optional[str] = Field(None, alias="targetResource", description="Resource to inhabit (migration)")
    attributes: Dict[str, Any] = Field(default_factory=dict, description="Bag carried across migration")

    @model_validator(mode="after")
    def _one_resource(self) -> "RegistrationRequest":
        if (self.resource is None) == (self.target_resource is None):
            raise ValueError("exactly one of resource or targetResource is required")
        return self

    @property
    def is_migration(self) -> bool:
        return self.target_resource is not None


class MigrationDocument(WireModel):
    """Schema for a self-contained body transfer."""
    agent_id: str = Field(..., alias="agentId", min_length=1)
    webhook: str = Field(..., min_length=1)
    attributes: Dict[str, Any] = Field(default_factory=dict)
    target_resource: str = Field(..., alias="targetResource")


class ActionRequest(WireModel):
    """Schema for PUT /bodies/{agentId}/action: exactly action and forTick."""
    action: str = Field(..., min_length=1)
    for_tick: int = Field(..., alias="forTick", ge=0)


class ObservationPayload(WireModel):
    """Schema for the environment state pushed to an agent webhook every tick."""
    type: Literal["traffic", "home", "work"]
    time: int = Field(..., ge=0)
    webhook: str = Field(..., description="Action submission URL of the body")

    # traffic
    vehicle_speed: Optional[float] = Field(None, alias="vehicleSpeed", ge=0)
    at_intersection: Optional[bool] = Field(None, alias="atIntersection")
    gap_ahead: Optional[float] = Field(None, alias="gapAhead")
    speed_limit: Optional[float] = Field(None, alias="speedLimit", gt=0)
    light: Optional[Literal["green", "red", "none"]] = None
    street: Optional[str] = None
    offset: Optional[float] = Field(None, ge=0)
    route_remaining: Optional[int] = Field(None, alias="routeRemaining", ge=0)

    # home / work
    activity: Optional[str] = None

    @model_validator(mode="after")
    def _fields_match_type(self) -> "ObservationPayload":
        traffic = {
            "vehicle_speed": self.vehicle_speed,
            "at_intersection": self.at_intersection,
            "speed_limit": self.speed_limit,
            "light": self.light,
            "street": self.street,
            "offset": self.offset,
            "route_remaining": self.route_remaining,
        }
        if self.type == "traffic":
            missing = [name for name, value in traffic.items() if value is None]
            if missing or self.activity is not None:
                raise ValueError(f"traffic observation fields wrong: missing={missing}")
        else:
            present = [name for name, value in traffic.items() if value is not None]
            if self.gap_ahead is not None:
                present.append("gap_ahead")
            if self.activity is None or present:
                raise ValueError(f"{self.type} observation carries only activity")
        return self


# ============================================================================
# CLOCK, LIGHTS AND ROUTES
# ============================================================================

class TimeMessage(WireModel):
    """Schema for tick broadcasts and acks."""
    time: int = Field(..., ge=0)


class ParticipantRequest(WireModel):
    """Schema for clock participant registration."""
    id: str = Field(..., min_length=1)
    callback: str = Field(..., min_length=1)


class LightRequest(WireModel):
    """Schema for PUT /junctions/{id}/light."""
    green: str = Field(..., min_length=1)


class AgentSchedule(WireModel):
    """Schema for a driver's departure schedule."""
    depart_home_tick: int = Field(..., alias="departHomeTick", ge=0)
    depart_work_tick: int = Field(..., alias="departWorkTick", gt=0)


# ============================================================================
# VALIDATION FUNCTIONS
# ============================================================================

def validate_document(model: Type[ModelT], data: Any, what: str = "document") -> ModelT:
    """
    Validate an incoming document against its schema.

    Args:
        model: Pydantic model class
        data: Decoded JSON body
        what: Name used in the error detail

    Returns:
        Validated model instance

    Raises:
        ServiceError: 400 if the document does not match the schema
    """
    if not isinstance(data, dict):
        raise ServiceError(400, f"Malformed {what}: expected an object")
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        logger.debug("document_rejected", what=what, loc=str(first.get("loc")), msg=first.get("msg"))
        raise ServiceError(400, f"Malformed {what}: {first.get('loc')} {first.get('msg')}") from e
