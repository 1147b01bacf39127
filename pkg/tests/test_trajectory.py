"""
Tests for trajectory lines and the trip ledger.
"""

import pytest

from core.trajectory import TrajectoryEntry, TrajectoryLog, TripRecord, trips_to_csv


class TestTrajectoryLines:
    def test_three_decimals(self):
        entry = TrajectoryEntry(7, "d01", "J00-J01", 12.0, 1 / 3, "moved")
        assert entry.to_line() == "7,d01,J00-J01,12.000,0.333,moved"

    def test_parse(self):
        entry = TrajectoryEntry.from_line("3,a,s1,20.500,4.000,crossed\n")
        assert (entry.tick, entry.agent_id, entry.street, entry.offset, entry.event) == (3, "a", "s1", 20.5, "crossed")

    def test_unknown_event(self):
        with pytest.raises(ValueError):
            TrajectoryEntry.from_line("3,a,s1,20.500,4.000,teleported")

    def test_log_sorts_each_tick_by_agent(self, tmp_path):
        path = tmp_path / "nested" / "trajectory.log"
        log = TrajectoryLog(str(path))
        log.write_tick([TrajectoryEntry(0, "b", "s1", 0, 0), TrajectoryEntry(0, "a", "s1", 10, 2)])
        log.write_tick([TrajectoryEntry(1, "a", "s1", 12, 2, "blocked")])
        log.close()
        assert path.read_text().splitlines() == [
            "0,a,s1,10.000,2.000,moved",
            "0,b,s1,0.000,0.000,moved",
            "1,a,s1,12.000,2.000,blocked",
        ]

    def test_log_without_path_is_silent(self):
        log = TrajectoryLog(None)
        log.write_tick([TrajectoryEntry(0, "a", "s1", 0, 0)])
        log.close()


class TestTrips:
    def test_wire_document(self):
        trip = TripRecord("a", "home->work", 3, 15, ["s1", "s2"])
        assert trip.travel_ticks == 12
        assert TripRecord.from_wire(trip.to_wire()) == trip

    def test_csv_is_sorted_by_agent_then_departure(self):
        trips = [
            TripRecord("b", "home->work", 0, 9, free_flow_ticks=8),
            TripRecord("a", "work->home", 30, 41, free_flow_ticks=10),
            TripRecord("a", "home->work", 2, 14, free_flow_ticks=10),
        ]
        assert trips_to_csv(trips).splitlines() == [
            "agentId,direction,departTick,arriveTick,travelTicks,freeFlowTicks",
            "a,home->work,2,14,12,10",
            "a,work->home,30,41,11,10",
            "b,home->work,0,9,9,8",
        ]

    def test_empty_ledger_is_header_only(self):
        assert trips_to_csv([]) == "agentId,direction,departTick,arriveTick,travelTicks,freeFlowTicks\n"
