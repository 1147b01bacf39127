"""
Simulation Orchestrator
Configures and executes a scenario run: boots the constellation, drives the clock, checks and records.
"""

import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from core.clock import lockstep_violations
from core.config import PARTICIPANT_ORDER, config
from core.coordinator import Constellation, build_inprocess, start_multiprocess
from core.errors import CensusFailure, InvariantBreach, SimulationError, StartupError, TransportError
from core.routing import free_flow_ticks
from core.scenario import Scenario, load_scenario
from core.trajectory import TripRecord, trips_to_csv
from core.transport import Reply
from core.utils import ensure_directory_exists, sanitize_filename, save_to_file, setup_logging

logger = setup_logging(__name__)

CENSUS_SERVICES = ("home", "work", "road")
DIRECTIONS = ("home->work", "work->home")
# Travel may undercut the ceiling of the free-flow time by tick rounding.
ROUNDING_ALLOWANCE = 2

EXIT_COMPLETED = 0
EXIT_FAILED = 1
EXIT_EXHAUSTED = 2


@dataclass
class RunConfig:
    """Everything needed to run one scenario."""
    scenario_path: str
    mode: str = "inprocess"
    output_dir: Optional[str] = None
    max_ticks: Optional[int] = None
    addresses: Optional[Dict[str, str]] = None
    base_port: Optional[int] = None
    faults: Tuple[str, ...] = ()
    watchdog_seconds: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("inprocess", "multiprocess"):
            raise ValueError(f"Unknown mode: {self.mode}")
        if self.mode == "inprocess" and self.addresses:
            raise ValueError("inprocess mode takes no service addresses")

    @property
    def run_dir(self) -> str:
        if self.output_dir:
            return self.output_dir
        stem = os.path.splitext(os.path.basename(self.scenario_path))[0]
        return os.path.join(config.output_dir, sanitize_filename(stem))


@dataclass
class RunSummary:
    """Outcome of a run, written to summary.txt."""
    status: str
    exit_code: int
    agents: int = 0
    agents_completed: int = 0
    trips: List[TripRecord] = field(default_factory=list)
    ticks_simulated: int = 0
    diagnostic: str = ""
    run_dir: str = ""

    @property
    def mean_travel_ticks(self) -> Optional[float]:
        if not self.trips:
            return None
        return sum(t.travel_ticks for t in self.trips) / len(self.trips)

    def to_text(self) -> str:
        mean = self.mean_travel_ticks
        lines = [
            f"status: {self.status}",
            f"exit_code: {self.exit_code}",
            f"agents: {self.agents}",
            f"agents_completed: {self.agents_completed}",
            f"trips: {len(self.trips)}",
            f"mean_travel_ticks: {'n/a' if mean is None else f'{mean:.3f}'}",
            f"ticks_simulated: {self.ticks_simulated}",
        ]
        if self.diagnostic:
            lines.append(f"diagnostic: {self.diagnostic}")
        return "\n".join(lines) + "\n"


class SimulationOrchestrator:
    """Management service: configuration and execution of a simulation."""

    def __init__(self, run_config: RunConfig):
        self.run_config = run_config
        self.scenario: Optional[Scenario] = None
        self.constellation: Optional[Constellation] = None
        self.ticks_simulated = 0

    # ------------------------------------------------------------------
    # Plumbing
    # ------------------------------------------------------------------

    def _url(self, service: str, path: str) -> str:
        return f"{self.constellation.addresses[service]}{path}"

    def _call(self, method: str, service: str, path: str, body: Any = None) -> Reply:
        try:
            return self.constellation.transport.request(method, self._url(service, path), body)
        except TransportError as e:
            raise SimulationError(f"{service} unreachable: {e}") from e

    def _expect(self, reply: Reply, status: int, what: str, error: type = SimulationError) -> Any:
        if reply.status != status:
            raise error(f"{what} failed: {reply.status} {reply.detail}")
        return reply.body

    def _start_constellation(self) -> Constellation:
        rc = self.run_config
        max_ticks = rc.max_ticks or self.scenario.params.max_ticks
        if rc.mode == "inprocess":
            return build_inprocess(self.scenario, rc.run_dir, rc.faults, max_ticks)
        return start_multiprocess(rc.scenario_path, rc.run_dir, rc.faults, max_ticks, rc.base_port)

    # ------------------------------------------------------------------
    # Checks
    # ------------------------------------------------------------------

    def census_check(self, tick: int) -> None:
        """
        Verify that every live agent is hosted by exactly one environment service.

        Raises:
            CensusFailure: If an agent is missing, duplicated or unknown
        """
        hosts: Dict[str, List[str]] = {}
        for service in CENSUS_SERVICES:
            census = self._expect(self._call("GET", service, "/bodies"), 200, f"census of {service}")
            for entry in census:
                hosts.setdefault(entry["agentId"], []).append(service)
        expected = {p.agent_id for p in self.scenario.population}
        for agent_id in sorted(expected | set(hosts)):
            found = hosts.get(agent_id, [])
            if agent_id not in expected:
                raise CensusFailure(f"tick {tick}: unknown agent '{agent_id}' hosted by {found}")
            if len(found) != 1:
                raise CensusFailure(f"tick {tick}: agent '{agent_id}' hosted by {found or 'nobody'}")

    def fetch_trips(self) -> List[TripRecord]:
        trips = [
            TripRecord.from_wire(doc)
            for doc in self._expect(self._call("GET", "road", "/trips"), 200, "trip listing")
        ]
        for trip in trips:
            trip.free_flow_ticks = free_flow_ticks(self.scenario, trip.route)
        return trips

    def completed_agents(self, trips: List[TripRecord]) -> int:
        directions: Dict[str, set] = {}
        for trip in trips:
            directions.setdefault(trip.agent_id, set()).add(trip.direction)
        return sum(1 for dirs in directions.values() if dirs >= set(DIRECTIONS))

    def check_trips(self, trips: List[TripRecord]) -> None:
        for trip in trips:
            if trip.arrive_tick <= trip.depart_tick:
                raise InvariantBreach(f"Trip of '{trip.agent_id}' arrives at {trip.arrive_tick} before leaving")
            if trip.travel_ticks + ROUNDING_ALLOWANCE < trip.free_flow_ticks:
                raise InvariantBreach(
                    f"Trip of '{trip.agent_id}' took {trip.travel_ticks} ticks, free flow is {trip.free_flow_ticks}"
                )

    def check_lockstep(self) -> None:
        events = self._expect(self._call("GET", "clock", "/events"), 200, "clock event log")
        violations = lockstep_violations(events, PARTICIPANT_ORDER)
        if violations:
            raise InvariantBreach(f"Lockstep violated: {violations[0]}")

    def await_barrier(self) -> None:
        """Wait until every participant acked the current tick; the watchdog aborts, never skips."""
        watchdog = self.run_config.watchdog_seconds or config.watchdog_seconds
        started = time.monotonic()
        while True:
            barrier = self._expect(self._call("GET", "clock", "/barrier"), 200, "barrier query")
            if set(barrier["acked"]) >= set(barrier["participants"]):
                return
            if watchdog is not None and time.monotonic() - started > watchdog:
                missing = sorted(set(barrier["participants"]) - set(barrier["acked"]))
                raise InvariantBreach(f"Watchdog: tick {barrier['time']} still waiting for {missing}")
            time.sleep(0.01)

    # ------------------------------------------------------------------
    # Run
    # ------------------------------------------------------------------

    def _drive(self) -> str:
        """Register, bootstrap and drive the clock; returns the final status."""
        for name in PARTICIPANT_ORDER:
            self._expect(
                self._call("POST", "clock", "/participants",
                           {"id": name, "callback": self._url(name, "/clock")}),
                201, f"registration of {name}", StartupError,
            )
        self._expect(self._call("POST", "drivers", "/bootstrap"), 201, "driver bootstrap", StartupError)
        self.census_check(0)

        population = len(self.scenario.population)
        if self.completed_agents(self.fetch_trips()) == population:
            return "completed"

        self._expect(self._call("POST", "clock", "/start"), 200, "start broadcast")
        self.ticks_simulated = 1
        tick = 0
        while True:
            self.await_barrier()
            self.census_check(tick)
            if self.completed_agents(self.fetch_trips()) == population:
                return "completed"
            advanced = self._expect(self._call("POST", "clock", "/advance"), 200, "advance")
            if advanced.get("exhausted"):
                return "exhausted"
            tick = advanced["time"]
            self.ticks_simulated += 1
            if tick % 100 == 0:
                logger.info("simulation_progress", tick=tick)

    def run(self) -> RunSummary:
        """
        Execute the scenario to completion or exhaustion.

        Returns:
            RunSummary with exit code 0 (completed), 2 (maxTicks reached) or 1 (failure)
        """
        rc = self.run_config
        run_dir = ensure_directory_exists(rc.run_dir)
        summary = RunSummary(status="failed", exit_code=EXIT_FAILED, run_dir=run_dir)
        trips: List[TripRecord] = []
        try:
            self.scenario = load_scenario(rc.scenario_path)
            summary.agents = len(self.scenario.population)
            logger.info("run_started", scenario=rc.scenario_path, mode=rc.mode, run_dir=run_dir)
            self.constellation = self._start_constellation()
            status = self._drive()
            self.check_lockstep()
            trips = self.fetch_trips()
            self.check_trips(trips)
            summary.status = status
            summary.exit_code = EXIT_COMPLETED if status == "completed" else EXIT_EXHAUSTED
        except SimulationError as e:
            logger.error("run_failed", error_type=type(e).__name__, error=str(e))
            summary.diagnostic = f"{type(e).__name__}: {e}"
        finally:
            if self.constellation is not None:
                if summary.exit_code == EXIT_FAILED and not trips:
                    trips = self._trips_or_empty()
                self.constellation.shutdown()

        summary.trips = trips
        summary.agents_completed = self.completed_agents(trips)
        summary.ticks_simulated = self.ticks_simulated
        save_to_file(trips_to_csv(trips), "trips.csv", run_dir)
        save_to_file(summary.to_text(), "summary.txt", run_dir)
        logger.info("run_finished", status=summary.status, exit_code=summary.exit_code,
                    ticks=summary.ticks_simulated, trips=len(trips))
        return summary

    def _trips_or_empty(self) -> List[TripRecord]:
        try:
            return self.fetch_trips()
        except SimulationError:
            return []


def run_simulation(run_config: RunConfig) -> RunSummary:
    """Run a scenario with the given configuration."""
    return SimulationOrchestrator(run_config).run()
