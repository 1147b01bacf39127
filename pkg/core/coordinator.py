"""
Service constellation for the traffic simulation.
Builds every service and wires their addresses, either in one process or one process per service.
"""

import multiprocessing
import os
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import uvicorn

from agents.driver_agent import DriverAgentService
from core.activity import ActivityService
from core.clock import ClockService
from core.config import SERVICE_CONFIGS, config, service_addresses
from core.errors import StartupError, TransportError
from core.road_network import RoadNetworkService
from core.scenario import Scenario, load_scenario
from core.traffic_lights import TrafficLightController
from core.transport import BaseTransport, HttpTransport, InProcessTransport, Service, build_app
from core.utils import setup_logging

logger = setup_logging(__name__)

TRAJECTORY_FILE = "trajectory.log"


def build_service(name: str, scenario: Scenario, addresses: Dict[str, str], transport: BaseTransport,
                  run_dir: Optional[str] = None, faults: Iterable[str] = (),
                  max_ticks: Optional[int] = None) -> Service:
    """
    Create one service of the constellation.

    Args:
        name: Service key from SERVICE_CONFIGS
        scenario: Validated scenario shared by every service
        addresses: Base URL of every service
        transport: Transport used for outbound requests
        run_dir: Run directory; the road service writes its trajectory log there
        faults: Fault-injection hooks enabled on the environment services
        max_ticks: Last tick bound handed to the clock

    Returns:
        The service instance
    """
    clock_url = addresses["clock"]
    if name == "clock":
        return ClockService(name, addresses[name], transport, max_ticks=max_ticks)
    if name == "road":
        trajectory = os.path.join(run_dir, TRAJECTORY_FILE) if run_dir else None
        return RoadNetworkService(
            name, addresses[name], transport, scenario,
            place_bases={"home": addresses["home"], "work": addresses["work"]},
            clock_url=clock_url, trajectory_path=trajectory, faults=faults,
        )
    if name in ("home", "work"):
        return ActivityService(
            name, name, addresses[name], transport, scenario,
            road_url=addresses["road"], clock_url=clock_url, faults=faults,
        )
    if name == "lights":
        return TrafficLightController(
            name, addresses[name], transport, addresses["road"],
            green_ticks=scenario.params.green_ticks, clock_url=clock_url,
        )
    if name == "drivers":
        return DriverAgentService(name, addresses[name], transport, scenario, addresses["home"], addresses["work"])
    raise ValueError(f"Unknown service: {name}")


@dataclass
class Constellation:
    """Running services and the transport the orchestrator talks through."""
    addresses: Dict[str, str]
    transport: BaseTransport
    services: Dict[str, Service] = field(default_factory=dict)
    processes: List[multiprocessing.process.BaseProcess] = field(default_factory=list)

    def shutdown(self) -> None:
        for service in self.services.values():
            service.close()
        for process in self.processes:
            if process.is_alive():
                process.terminate()
            process.join(timeout=5)
        self.transport.close()
        logger.debug("constellation_stopped", processes=len(self.processes))


def build_inprocess(scenario: Scenario, run_dir: Optional[str] = None, faults: Iterable[str] = (),
                    max_ticks: Optional[int] = None) -> Constellation:
    """All services in this process, dispatched through virtual hosts."""
    addresses = service_addresses("inprocess")
    transport = InProcessTransport()
    constellation = Constellation(addresses, transport)
    for name in SERVICE_CONFIGS:
        service = build_service(name, scenario, addresses, transport, run_dir, faults, max_ticks)
        transport.mount(service)
        constellation.services[name] = service
    return constellation


def serve_service(name: str, scenario_path: str, addresses: Dict[str, str], port: int,
                  run_dir: Optional[str] = None, faults: Iterable[str] = (),
                  max_ticks: Optional[int] = None, host: Optional[str] = None) -> None:
    """Run one service as an HTTP server until the process is stopped."""
    scenario = load_scenario(scenario_path)
    transport = HttpTransport()
    service = build_service(name, scenario, addresses, transport, run_dir, tuple(faults), max_ticks)
    logger.info("service_serving", service=name, port=port)
    uvicorn.run(build_app(service), host=host or config.host, port=port, log_level="warning")


def wait_until_healthy(addresses: Dict[str, str], transport: BaseTransport,
                       timeout: Optional[float] = None) -> None:
    """Poll GET /health on every service until all answer or the timeout passes."""
    deadline = time.monotonic() + (config.startup_timeout if timeout is None else timeout)
    pending = dict(addresses)
    while pending:
        for name, base in list(pending.items()):
            try:
                if transport.get(f"{base}/health").ok:
                    del pending[name]
            except TransportError:
                pass
        if not pending:
            break
        if time.monotonic() > deadline:
            raise StartupError(f"Services not healthy: {sorted(pending)}")
        time.sleep(0.1)


def start_multiprocess(scenario_path: str, run_dir: Optional[str] = None, faults: Iterable[str] = (),
                       max_ticks: Optional[int] = None, base_port: Optional[int] = None,
                       host: Optional[str] = None) -> Constellation:
    """One spawned process per service, talking HTTP on consecutive ports."""
    addresses = service_addresses("multiprocess", host, base_port)
    port0 = config.base_port if base_port is None else base_port
    context = multiprocessing.get_context("spawn")
    constellation = Constellation(addresses, HttpTransport())
    for name, service_config in SERVICE_CONFIGS.items():
        process = context.Process(
            target=serve_service,
            args=(name, scenario_path, addresses, port0 + service_config["port_offset"],
                  run_dir, tuple(faults), max_ticks, host),
            name=f"sim-{name}",
            daemon=True,
        )
        process.start()
        constellation.processes.append(process)
    try:
        wait_until_healthy(addresses, constellation.transport)
    except StartupError:
        constellation.shutdown()
        raise
    logger.info("constellation_started", mode="multiprocess", services=len(addresses))
    return constellation
