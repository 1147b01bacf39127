"""
Routing over the road network.
Free-flow shortest routes with a deterministic tie-break, shared by services, CLI and tests.
"""

import heapq
import math
from typing import Dict, List, Tuple

import networkx as nx

from core.errors import BrokenChain, NoRoute
from core.scenario import Scenario, Street


class RoadGraph:
    """Directed multigraph of junctions keyed by street id."""

    def __init__(self, scenario: Scenario):
        self.streets: Dict[str, Street] = scenario.street_map()
        self.graph = nx.MultiDiGraph()
        self.graph.add_nodes_from(j.id for j in scenario.junctions)
        for street in scenario.streets:
            self.graph.add_edge(
                street.from_, street.to, key=street.id,
                cost=street.length / street.speed_limit,
            )

    def shortest_route(self, origin: str, destination: str) -> List[str]:
        """
        Find the route with minimal free-flow time.

        Ties are broken by the lexicographically smallest street-id sequence.

        Args:
            origin: Start junction id
            destination: End junction id

        Returns:
            Ordered street ids (empty when origin == destination)

        Raises:
            NoRoute: If a junction is unknown or the destination is unreachable
        """
        for junction in (origin, destination):
            if junction not in self.graph:
                raise NoRoute(f"Unknown junction '{junction}'")
        if origin == destination:
            return []

        # Label-setting search ordered by (cost, street sequence); with strictly
        # positive costs the first settled label of a node is its best one.
        frontier: List[Tuple[float, Tuple[str, ...], str]] = [(0.0, (), origin)]
        settled = set()
        while frontier:
            cost, path, junction = heapq.heappop(frontier)
            if junction in settled:
                continue
            settled.add(junction)
            if junction == destination:
                return list(path)
            for _, successor, street_id, data in self.graph.out_edges(junction, keys=True, data=True):
                if successor not in settled:
                    heapq.heappush(frontier, (cost + data["cost"], path + (street_id,), successor))

        raise NoRoute(f"No route from '{origin}' to '{destination}'")

    def free_flow_time(self, route: List[str]) -> float:
        """Sum of length/speedLimit along a connected chain of streets."""
        total = 0.0
        previous = None
        for street_id in route:
            street = self.streets.get(street_id)
            if street is None:
                raise BrokenChain(f"Unknown street '{street_id}'")
            if previous is not None and previous.to != street.from_:
                raise BrokenChain(f"Street '{street_id}' does not start where '{previous.id}' ends")
            total += street.length / street.speed_limit
            previous = street
        return total


def shortest_route(scenario: Scenario, origin: str, destination: str) -> List[str]:
    """Shortest free-flow route between two junctions of a scenario."""
    return RoadGraph(scenario).shortest_route(origin, destination)


def free_flow_time(scenario: Scenario, route: List[str]) -> float:
    """Free-flow travel time of a route in seconds."""
    return RoadGraph(scenario).free_flow_time(route)


def free_flow_ticks(scenario: Scenario, route: List[str]) -> int:
    """Free-flow travel time rounded up to whole ticks."""
    return math.ceil(free_flow_time(scenario, route) / scenario.params.tick_seconds)
