"""
Configuration module for the commuter traffic simulation.
Handles environment settings and the table of services that make up a simulation.
"""

from typing import Any, Dict, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings, read from SIM_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="SIM_", env_file=".env", extra="ignore")

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Output
    output_dir: str = "./output"

    # Deployment
    mode: str = "inprocess"
    host: str = "127.0.0.1"
    base_port: int = 8700
    startup_timeout: float = 15.0

    # Protocol
    push_attempts: int = 3
    http_timeout: float = 5.0
    watchdog_seconds: Optional[float] = None


# Global configuration instance
config = Settings()

# Service-specific configurations
SERVICE_CONFIGS: Dict[str, Dict[str, Any]] = {
    "clock": {
        "name": "ClockService",
        "description": "Discrete time model: barrier-synchronised tick broadcaster",
        "port_offset": 0,
    },
    "road": {
        "name": "RoadNetworkService",
        "description": "Street and junction resources, vehicle kinematics, lights and routes",
        "port_offset": 1,
    },
    "home": {
        "name": "HomeService",
        "description": "Home Place resources with a single activity",
        "port_offset": 2,
    },
    "work": {
        "name": "WorkService",
        "description": "Work Place resources with a single activity",
        "port_offset": 3,
    },
    "lights": {
        "name": "TrafficLightController",
        "description": "Fixed-cycle phase controller for lit junctions",
        "port_offset": 4,
    },
    "drivers": {
        "name": "DriverAgentService",
        "description": "Driver agents with their notification resources",
        "port_offset": 5,
    },
}

# Broadcast order within a tick: lights are set before the road network moves vehicles.
PARTICIPANT_ORDER = ("lights", "home", "work", "road")


def service_addresses(mode: str = "inprocess", host: Optional[str] = None,
                      base_port: Optional[int] = None) -> Dict[str, str]:
    """
    Build the base URL of every service.

    Args:
        mode: "inprocess" gives virtual hosts, "multiprocess" gives real ports
        host: Bind host for multiprocess mode
        base_port: First port; each service adds its port offset

    Returns:
        Mapping service name -> base URL
    """
    if mode == "inprocess":
        return {name: f"http://{name}.local" for name in SERVICE_CONFIGS}
    if mode != "multiprocess":
        raise ValueError(f"Unknown mode: {mode}")
    host = host or config.host
    base_port = config.base_port if base_port is None else base_port
    return {
        name: f"http://{host}:{base_port + service['port_offset']}"
        for name, service in SERVICE_CONFIGS.items()
    }
