"""
Trajectory Analyzer for detecting safety violations in a finished run.
"""

import os
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, Iterable, List, Optional, Tuple

from core.coordinator import TRAJECTORY_FILE
from core.scenario import Scenario
from core.traffic_lights import CycleState, FixedCyclePolicy
from core.trajectory import TrajectoryEntry
from core.utils import load_from_file, setup_logging

logger = setup_logging(__name__)


@dataclass
class LogIssue:
    """Represents a violation found in the trajectory log."""
    line_number: int
    issue_type: str  # 'gap', 'red_light', 'speed', 'malformed'
    tick: int
    agent_id: str
    description: str
    severity: str = "high"


@dataclass
class _Line:
    number: int
    tick: int
    agent_id: str
    street: str
    offset: Decimal
    speed: Decimal
    event: str

    @classmethod
    def from_entry(cls, number: int, entry: TrajectoryEntry) -> "_Line":
        # float repr of a three-decimal field round-trips to the same Decimal
        return cls(
            number, entry.tick, entry.agent_id, entry.street,
            Decimal(str(entry.offset)), Decimal(str(entry.speed)), entry.event,
        )


class TrajectoryAnalyzer:
    """Scans trajectory lines for gap, red-light and speed-limit violations."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.streets = scenario.street_map()
        self.gap_min = Decimal(str(scenario.params.gap_min))
        self.policy = FixedCyclePolicy()
        self.cycles: Dict[str, CycleState] = {
            j.id: CycleState(j.id, scenario.incoming(j.id), scenario.params.green_ticks)
            for j in scenario.junctions if j.has_light
        }

    def _parse(self, lines: Iterable[str]) -> Tuple[List[_Line], List[LogIssue]]:
        parsed, issues = [], []
        for number, raw in enumerate(lines, 1):
            if not raw.strip():
                continue
            entry: Optional[TrajectoryEntry]
            try:
                entry = TrajectoryEntry.from_line(raw)
            except ValueError:
                entry = None
            if entry is None or entry.street not in self.streets:
                issues.append(LogIssue(number, "malformed", -1, "", f"Unreadable line: {raw.strip()}"))
                continue
            parsed.append(_Line.from_entry(number, entry))
        return parsed, issues

    def analyze_lines(self, lines: Iterable[str]) -> List[LogIssue]:
        """Analyze trajectory lines in file order."""
        parsed, issues = self._parse(lines)
        issues.extend(self._check_gaps(parsed))
        issues.extend(self._check_lights(parsed))
        issues.extend(self._check_speeds(parsed))
        return sorted(issues, key=lambda i: (i.line_number, i.issue_type))

    def analyze_file(self, path: str) -> List[LogIssue]:
        return self.analyze_lines(load_from_file(path).splitlines())

    def _check_gaps(self, parsed: List[_Line]) -> List[LogIssue]:
        issues = []
        groups: Dict[Tuple[int, str], List[_Line]] = {}
        for line in parsed:
            if line.event != "arrived":
                groups.setdefault((line.tick, line.street), []).append(line)
        for (tick, street), group in sorted(groups.items()):
            ordered = sorted(group, key=lambda l: l.offset, reverse=True)
            for ahead, behind in zip(ordered, ordered[1:]):
                if ahead.offset - behind.offset < self.gap_min:
                    issues.append(LogIssue(
                        behind.number, "gap", tick, behind.agent_id,
                        f"{behind.agent_id} {ahead.offset - behind.offset} m behind {ahead.agent_id} on {street}",
                    ))
        return issues

    def _check_lights(self, parsed: List[_Line]) -> List[LogIssue]:
        issues = []
        previous: Dict[str, _Line] = {}
        for line in parsed:
            approach: Optional[str] = None
            if line.event == "crossed":
                before = previous.get(line.agent_id)
                approach = before.street if before else None
            elif line.event == "arrived":
                approach = line.street
            if approach is not None:
                junction = self.streets[approach].to
                cycle = self.cycles.get(junction)
                if cycle is not None:
                    green = self.policy.phase_for(cycle, line.tick)
                    if green != approach:
                        issues.append(LogIssue(
                            line.number, "red_light", line.tick, line.agent_id,
                            f"{line.agent_id} left {approach} through {junction} while {green} was green",
                        ))
            previous[line.agent_id] = line
        return issues

    def _check_speeds(self, parsed: List[_Line]) -> List[LogIssue]:
        issues = []
        for line in parsed:
            limit = Decimal(str(self.streets[line.street].speed_limit))
            if line.speed > limit:
                issues.append(LogIssue(
                    line.number, "speed", line.tick, line.agent_id,
                    f"{line.agent_id} at {line.speed} m/s on {line.street} (limit {limit})",
                ))
        return issues

    def get_issues_summary(self, issues: List[LogIssue]) -> Dict[str, int]:
        summary: Dict[str, int] = {}
        for issue in issues:
            summary[issue.issue_type] = summary.get(issue.issue_type, 0) + 1
        return summary


def verify_run(scenario: Scenario, run_dir: str) -> List[LogIssue]:
    """Scan the trajectory log of a run directory."""
    path = os.path.join(run_dir, TRAJECTORY_FILE)
    issues = TrajectoryAnalyzer(scenario).analyze_file(path)
    logger.info("trajectory_verified", path=path, issues=len(issues))
    return issues
