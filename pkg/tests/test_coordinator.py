"""
Tests for building and starting the service constellation.
"""

import itertools
import os
import socket

import pytest

from core.config import SERVICE_CONFIGS, config
from core.coordinator import TRAJECTORY_FILE, wait_until_healthy
from core.errors import StartupError
from core.orchestrator import RunConfig, run_simulation
from core.transport import Service
from tests.conftest import HOME, ROAD, mount_all


def _free_base_port(start: int = 20000, stop: int = 40000, step: int = 97) -> int:
    """First base port whose whole constellation range can be bound right now."""
    width = max(s["port_offset"] for s in SERVICE_CONFIGS.values()) + 1
    for base in range(start, stop, step):
        sockets = []
        try:
            for port in range(base, base + width):
                sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                sockets.append(sock)
                sock.bind((config.host, port))
            return base
        except OSError:
            continue
        finally:
            for sock in sockets:
                sock.close()
    pytest.skip("no free port range for a multiprocess run")


class TestWaitUntilHealthy:
    def test_returns_once_every_service_answers(self):
        transport = mount_all([Service("road", ROAD, None), Service("home", HOME, None)])
        wait_until_healthy({"road": ROAD, "home": HOME}, transport, timeout=1)

    def test_times_out_naming_the_silent_services(self, mocker):
        transport = mount_all([Service("road", ROAD, None)])
        sleep = mocker.patch("core.coordinator.time.sleep")
        mocker.patch("core.coordinator.time.monotonic", side_effect=itertools.count(0.0, 1.0))
        with pytest.raises(StartupError, match="home"):
            wait_until_healthy({"road": ROAD, "home": HOME}, transport, timeout=2)
        assert sleep.called


def _run(commute_path, run_dir, **overrides):
    summary = run_simulation(RunConfig(scenario_path=commute_path, output_dir=run_dir, **overrides))
    with open(os.path.join(run_dir, "trips.csv"), encoding="utf-8") as f:
        trips = f.read()
    with open(os.path.join(run_dir, TRAJECTORY_FILE), encoding="utf-8") as f:
        trajectory = f.read()
    return summary, trips, trajectory


def test_multiprocess_run_matches_inprocess(commute_path, tmp_path):
    base_port = _free_base_port()
    local, local_trips, local_trajectory = _run(commute_path, str(tmp_path / "inprocess"))
    remote, remote_trips, remote_trajectory = _run(
        commute_path, str(tmp_path / "multiprocess"), mode="multiprocess", base_port=base_port,
    )
    assert remote.exit_code == 0, remote.diagnostic
    assert local.exit_code == 0
    assert remote_trips == local_trips
    assert remote_trips.splitlines()[1:] == ["alice,home->work,0,12,12,10", "alice,work->home,20,32,12,10"]
    assert remote_trajectory == local_trajectory
