"""
Run records for the traffic simulation.
Holds the per-tick vehicle trajectory log and the trip ledger written to the run directory.
"""

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

from core.utils import ensure_directory_exists, setup_logging

logger = setup_logging(__name__)

TRAJECTORY_EVENTS = ("moved", "crossed", "blocked", "arrived")
TRIPS_HEADER = ["agentId", "direction", "departTick", "arriveTick", "travelTicks", "freeFlowTicks"]


@dataclass
class TrajectoryEntry:
    """One vehicle at the end of one tick."""
    tick: int
    agent_id: str
    street: str
    offset: float
    speed: float
    event: str = "moved"

    def to_line(self) -> str:
        return f"{self.tick},{self.agent_id},{self.street},{self.offset:.3f},{self.speed:.3f},{self.event}"

    @classmethod
    def from_line(cls, line: str) -> "TrajectoryEntry":
        tick, agent_id, street, offset, speed, event = line.strip().split(",")
        if event not in TRAJECTORY_EVENTS:
            raise ValueError(f"Unknown trajectory event '{event}'")
        return cls(int(tick), agent_id, street, float(offset), float(speed), event)


class TrajectoryLog:
    """Appends trajectory lines to a file, one flush per tick."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._file = None
        if path:
            ensure_directory_exists(os.path.dirname(os.path.abspath(path)))
            self._file = open(path, "w", encoding="utf-8", newline="\n")

    def write_tick(self, entries: Iterable[TrajectoryEntry]) -> None:
        if self._file is None:
            return
        for entry in sorted(entries, key=lambda e: e.agent_id):
            self._file.write(entry.to_line() + "\n")
        self._file.flush()

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


@dataclass
class TripRecord:
    """A completed home->work or work->home trip."""
    agent_id: str
    direction: str
    depart_tick: int
    arrive_tick: int
    route: List[str] = field(default_factory=list)
    free_flow_ticks: Optional[int] = None

    @property
    def travel_ticks(self) -> int:
        return self.arrive_tick - self.depart_tick

    def to_wire(self) -> Dict[str, Any]:
        return {
            "agentId": self.agent_id,
            "direction": self.direction,
            "departTick": self.depart_tick,
            "arriveTick": self.arrive_tick,
            "route": list(self.route),
        }

    @classmethod
    def from_wire(cls, data: Dict[str, Any]) -> "TripRecord":
        return cls(
            agent_id=data["agentId"],
            direction=data["direction"],
            depart_tick=int(data["departTick"]),
            arrive_tick=int(data["arriveTick"]),
            route=list(data.get("route", [])),
        )


def trips_to_csv(trips: List[TripRecord]) -> str:
    """Render trips as CSV sorted by (agentId, departTick)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRIPS_HEADER)
    for trip in sorted(trips, key=lambda t: (t.agent_id, t.depart_tick)):
        writer.writerow([
            trip.agent_id, trip.direction, trip.depart_tick, trip.arrive_tick,
            trip.travel_ticks, "" if trip.free_flow_ticks is None else trip.free_flow_ticks,
        ])
    return buffer.getvalue()
