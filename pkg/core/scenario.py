"""
Scenario model for the commuter traffic simulation using Pydantic.
Defines the world description, its YAML file format and its validation.
"""

from typing import Any, Dict, List, Literal, Tuple

import networkx as nx
import yaml
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from core.errors import ParseError, ValidationError
from core.utils import load_from_file, setup_logging

logger = setup_logging(__name__)

TOP_LEVEL_KEYS = ("junctions", "streets", "homes", "works", "population", "params")


class _ScenarioModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid", frozen=True)


# ============================================================================
# WORLD ELEMENTS
# ============================================================================

class Junction(_ScenarioModel):
    """Schema for a junction of the road network."""
    id: str = Field(..., min_length=1, description="Unique junction identifier")
    has_light: bool = Field(False, alias="hasLight", description="Whether a traffic light controls it")


class Street(_ScenarioModel):
    """Schema for a directed street between two junctions."""
    id: str = Field(..., min_length=1, description="Unique street identifier")
    from_: str = Field(..., alias="from", description="Origin junction id")
    to: str = Field(..., description="Destination junction id")
    length: float = Field(..., gt=0, description="Length in meters")
    speed_limit: float = Field(..., alias="speedLimit", gt=0, description="Speed limit in m/s")


class Place(_ScenarioModel):
    """Schema for a home or work Place attached to a junction."""
    id: str = Field(..., min_length=1, description="Unique place identifier")
    junction: str = Field(..., description="Junction the place attaches to")
    activity: str = Field(..., description="The single activity label, e.g. 'Watch TV'")
    kind: Literal["home", "work"] = Field("home", exclude=True, description="Set from the section it appears in")


class PersonSpec(_ScenarioModel):
    """Schema for one commuter of the population."""
    agent_id: str = Field(..., alias="agentId", min_length=1)
    home: str
    work: str
    depart_home_tick: int = Field(..., alias="departHomeTick", ge=0)
    depart_work_tick: int = Field(..., alias="departWorkTick", gt=0)


class SimParams(_ScenarioModel):
    """Schema for the simulation parameters."""
    tick_seconds: float = Field(1.0, alias="tickSeconds", gt=0)
    accel: float = Field(2.0, gt=0)
    decel: float = Field(4.0, gt=0)
    gap_min: float = Field(5.0, alias="gapMin", gt=0)
    green_ticks: int = Field(10, alias="greenTicks", gt=0)
    max_ticks: int = Field(5000, alias="maxTicks", gt=0)
    random_seed: int = Field(0, alias="randomSeed")


class Scenario(_ScenarioModel):
    """Schema for the complete world description."""
    junctions: List[Junction]
    streets: List[Street]
    homes: List[Place]
    works: List[Place]
    population: List[PersonSpec]
    params: SimParams

    def junction_map(self) -> Dict[str, Junction]:
        return {j.id: j for j in self.junctions}

    def street_map(self) -> Dict[str, Street]:
        return {s.id: s for s in self.streets}

    def place_map(self, kind: str) -> Dict[str, Place]:
        return {p.id: p for p in (self.homes if kind == "home" else self.works)}

    def incoming(self, junction_id: str) -> List[str]:
        """Sorted ids of the streets ending at a junction (its approaches)."""
        return sorted(s.id for s in self.streets if s.to == junction_id)

    def outgoing(self, junction_id: str) -> List[str]:
        return sorted(s.id for s in self.streets if s.from_ == junction_id)

    def places_at(self, junction_id: str) -> List[Place]:
        return [p for p in self.homes + self.works if p.junction == junction_id]


# ============================================================================
# LOADING AND SAVING
# ============================================================================

def _offending_id(data: Any, error: Dict[str, Any]) -> str:
    """Find the id of the element a pydantic error points at."""
    loc = list(error.get("loc", ()))
    if error.get("type") == "extra_forbidden" or error.get("type") == "missing":
        return str(loc[-1]) if loc else "scenario"
    node = data
    found = str(loc[-1]) if loc else "scenario"
    for part in loc:
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError):
            break
        if isinstance(node, dict):
            for key in ("id", "agentId"):
                if isinstance(node.get(key), str):
                    found = node[key]
    return found


def scenario_from_dict(data: Any) -> Scenario:
    """
    Build and validate a Scenario from its structured-text form.

    Args:
        data: Mapping with exactly the top-level scenario keys

    Returns:
        Validated Scenario

    Raises:
        ParseError: If the document is not a mapping
        ValidationError: If any invariant is broken
    """
    if not isinstance(data, dict):
        raise ParseError("Scenario document must be a mapping at top level")

    prepared = dict(data)
    for section, kind in (("homes", "home"), ("works", "work")):
        items = prepared.get(section)
        if isinstance(items, list):
            tagged = []
            for item in items:
                if isinstance(item, dict):
                    if "kind" in item:
                        raise ValidationError("kind", f"Unknown key 'kind' in {section}")
                    item = {**item, "kind": kind}
                tagged.append(item)
            prepared[section] = tagged

    try:
        scenario = Scenario.model_validate(prepared)
    except PydanticValidationError as e:
        first = e.errors()[0]
        raise ValidationError(_offending_id(data, first), f"{first.get('loc')}: {first.get('msg')}") from e

    validate_scenario(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """Serialize a Scenario into its camelCase structured-text form."""
    return scenario.model_dump(by_alias=True)


def load_scenario(path: str) -> Scenario:
    """
    Load and validate a scenario file.

    Args:
        path: Path to the YAML scenario document

    Returns:
        Validated Scenario
    """
    try:
        text = load_from_file(path)
    except OSError as e:
        raise ParseError(f"Cannot read scenario {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"Malformed scenario {path}: {e}") from e

    scenario = scenario_from_dict(data)
    logger.debug(
        "scenario_loaded", path=path, junctions=len(scenario.junctions),
        streets=len(scenario.streets), population=len(scenario.population),
    )
    return scenario


def save_scenario(scenario: Scenario, path: str) -> str:
    """Write a scenario as a YAML document and return its path."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(scenario_to_dict(scenario), f, sort_keys=False)
    return path


# ============================================================================
# VALIDATION
# ============================================================================

def _check_unique(ids: List[str]) -> None:
    seen = set()
    for item_id in ids:
        if item_id in seen:
            raise ValidationError(item_id, f"Duplicate id '{item_id}'")
        seen.add(item_id)


def validate_scenario(scenario: Scenario) -> None:
    """
    Check the cross-reference invariants of a parsed scenario.

    Raises:
        ValidationError: With the offending id on the first broken invariant
    """
    for group in (scenario.junctions, scenario.streets, scenario.homes, scenario.works):
        _check_unique([item.id for item in group])
    _check_unique([person.agent_id for person in scenario.population])

    junctions = scenario.junction_map()
    gap_min = scenario.params.gap_min

    for street in scenario.streets:
        for end in (street.from_, street.to):
            if end not in junctions:
                raise ValidationError(end, f"Street '{street.id}' references unknown junction '{end}'")
        if street.from_ == street.to:
            raise ValidationError(street.id, f"Street '{street.id}' starts and ends at the same junction")
        if street.length < gap_min:
            raise ValidationError(street.id, f"Street '{street.id}' is shorter than gapMin")

    for junction in scenario.junctions:
        if junction.has_light and not scenario.incoming(junction.id):
            raise ValidationError(junction.id, f"Lit junction '{junction.id}' has no incoming street")

    for place in scenario.homes + scenario.works:
        if place.junction not in junctions:
            raise ValidationError(place.junction, f"Place '{place.id}' references unknown junction '{place.junction}'")

    homes = scenario.place_map("home")
    works = scenario.place_map("work")
    graph = nx.DiGraph()
    graph.add_nodes_from(junctions)
    graph.add_edges_from((s.from_, s.to) for s in scenario.streets)

    # A Place holds one occupant, so it belongs to at most one person
    assigned: Dict[Tuple[str, str], str] = {}

    for person in scenario.population:
        if person.home not in homes:
            raise ValidationError(person.home, f"Person '{person.agent_id}' has unknown home '{person.home}'")
        if person.work not in works:
            raise ValidationError(person.work, f"Person '{person.agent_id}' has unknown work '{person.work}'")
        for kind, place_id in (("home", person.home), ("work", person.work)):
            owner = assigned.setdefault((kind, place_id), person.agent_id)
            if owner != person.agent_id:
                raise ValidationError(
                    place_id, f"Place '{place_id}' is assigned to both '{owner}' and '{person.agent_id}'"
                )
        if person.depart_work_tick <= person.depart_home_tick:
            raise ValidationError(person.agent_id, "departWorkTick must be after departHomeTick")
        home_junction = homes[person.home].junction
        work_junction = works[person.work].junction
        if home_junction == work_junction:
            raise ValidationError(person.agent_id, "Home and work attach to the same junction")
        if not (nx.has_path(graph, home_junction, work_junction)
                and nx.has_path(graph, work_junction, home_junction)):
            raise ValidationError(person.agent_id, "Commute is not routable in both directions")
