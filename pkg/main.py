"""
Commuter Traffic Simulation - Command Line Interface
Runs, validates and inspects commuter scenarios.
"""

from typing import List, Optional

import typer
from typing_extensions import Annotated

from core.config import SERVICE_CONFIGS, config, service_addresses
from core.coordinator import serve_service
from core.errors import NoRoute, ParseError, SimulationError, ValidationError
from core.log_analyzer import verify_run
from core.orchestrator import RunConfig, run_simulation
from core.routing import RoadGraph
from core.scenario import load_scenario
from core.utils import setup_logging

logger = setup_logging(__name__)

app = typer.Typer(help="Microservice traffic simulation of commuting drivers.", no_args_is_help=True)


@app.command()
def run(
    scenario: Annotated[str, typer.Argument(help="Scenario YAML file")],
    mode: Annotated[str, typer.Option("--mode", help="inprocess or multiprocess")] = config.mode,
    out: Annotated[Optional[str], typer.Option("--out", help="Run directory")] = None,
    max_ticks: Annotated[Optional[int], typer.Option("--max-ticks", min=1, help="Override maxTicks")] = None,
    base_port: Annotated[Optional[int], typer.Option("--base-port", help="First port in multiprocess mode")] = None,
    fault: Annotated[Optional[List[str]], typer.Option("--fault", help="Fault-injection hook (repeatable)")] = None,
    watchdog: Annotated[Optional[float], typer.Option("--watchdog", help="Abort after a tick stalls (s)")] = None,
):
    """Run a scenario until every commuter is back home or maxTicks is reached."""
    try:
        run_config = RunConfig(
            scenario_path=scenario, mode=mode, output_dir=out, max_ticks=max_ticks,
            base_port=base_port, faults=tuple(fault or ()), watchdog_seconds=watchdog,
        )
    except ValueError as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(1)
    summary = run_simulation(run_config)
    typer.echo(summary.to_text().rstrip())
    typer.echo(f"run directory: {summary.run_dir}")
    raise typer.Exit(summary.exit_code)


@app.command()
def validate(scenario: Annotated[str, typer.Argument(help="Scenario YAML file")]):
    """Check a scenario file and report the first broken invariant."""
    try:
        loaded = load_scenario(scenario)
    except ParseError as e:
        typer.echo(f"invalid: {e}", err=True)
        raise typer.Exit(1)
    except ValidationError as e:
        typer.echo(f"invalid: {e.offending_id}: {e}", err=True)
        raise typer.Exit(1)
    typer.echo(
        f"valid: {len(loaded.junctions)} junctions, {len(loaded.streets)} streets, "
        f"{len(loaded.homes)} homes, {len(loaded.works)} works, {len(loaded.population)} agents"
    )


@app.command()
def route(
    scenario: Annotated[str, typer.Argument(help="Scenario YAML file")],
    origin: Annotated[str, typer.Argument(metavar="FROM", help="Origin junction")],
    destination: Annotated[str, typer.Argument(metavar="TO", help="Destination junction")],
):
    """Print the shortest free-flow route between two junctions."""
    try:
        graph = RoadGraph(load_scenario(scenario))
        streets = graph.shortest_route(origin, destination)
    except NoRoute as e:
        typer.echo(f"no route: {e}", err=True)
        raise typer.Exit(1)
    except SimulationError as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(1)
    typer.echo(" ".join(streets))
    typer.echo(f"free-flow seconds: {graph.free_flow_time(streets):.3f}")


@app.command()
def serve(
    service: Annotated[str, typer.Argument(help=f"One of: {', '.join(SERVICE_CONFIGS)}")],
    scenario: Annotated[str, typer.Argument(help="Scenario YAML file")],
    port: Annotated[Optional[int], typer.Option("--port", help="Listen port")] = None,
    base_port: Annotated[Optional[int], typer.Option("--base-port", help="First port of the constellation")] = None,
    host: Annotated[Optional[str], typer.Option("--host")] = None,
    run_dir: Annotated[Optional[str], typer.Option("--run-dir", help="Where the road service writes its log")] = None,
    max_ticks: Annotated[Optional[int], typer.Option("--max-ticks", min=1)] = None,
):
    """Serve one service of the constellation over HTTP."""
    if service not in SERVICE_CONFIGS:
        typer.echo(f"unknown service: {service}", err=True)
        raise typer.Exit(1)
    base = config.base_port if base_port is None else base_port
    addresses = service_addresses("multiprocess", host, base)
    serve_service(
        service, scenario, addresses,
        port if port is not None else base + SERVICE_CONFIGS[service]["port_offset"],
        run_dir=run_dir, max_ticks=max_ticks, host=host,
    )


@app.command()
def verify(
    scenario: Annotated[str, typer.Argument(help="Scenario YAML file")],
    run_dir: Annotated[str, typer.Argument(help="Run directory holding trajectory.log")],
):
    """Scan a run's trajectory log for gap, red-light and speed violations."""
    try:
        issues = verify_run(load_scenario(scenario), run_dir)
    except (SimulationError, OSError) as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(1)
    for issue in issues:
        typer.echo(f"line {issue.line_number}: {issue.issue_type}: {issue.description}")
    if issues:
        raise typer.Exit(1)
    typer.echo("no violations")


def main():
    app()


if __name__ == "__main__":
    main()
