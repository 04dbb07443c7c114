"""macip command line: run a scenario (optionally serving the portal),
validate scenario files, replay a run directory read-only, and render
post-run reports."""

from __future__ import annotations

import json
import threading
from pathlib import Path

import click

from .api import DEFAULT_TOKEN, create_app
from .scenario import (ScenarioInvalid, default_scenario_path, load_scenario)
from .sim import Simulation, replay as replay_state


def _load(scenario_path: str | None):
    path = scenario_path or default_scenario_path()
    return load_scenario(path), path


def _serve(app, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


def _find_ui_dir(explicit: str | None) -> Path | None:
    if explicit:
        return Path(explicit)
    candidate = Path.cwd() / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


@click.group()
def main():
    """Desk-scale smart-city telemetry platform."""


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True),
              default=None, help="Scenario YAML (defaults to the packaged 10-hub city).")
@click.option("--speed", type=float, default=None,
              help="Sim-seconds per wall-second (server mode pacing).")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--data-dir", type=click.Path(), required=True,
              help="Run directory for the persistent log, scenario copy and models.")
@click.option("--headless", is_flag=True,
              help="Run at full speed without the HTTP portal.")
@click.option("--until", type=int, default=None,
              help="Stop after this many simulated seconds (testing aid).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--token", default=DEFAULT_TOKEN, show_default=True,
              help="Static bearer token for the API.")
@click.option("--ui-dir", type=click.Path(exists=True), default=None,
              help="Static dashboard build to serve at / (default: ./frontend/dist).")
def run(scenario_path, speed, seed, data_dir, headless, until, host, port, token, ui_dir):
    """Simulate a scenario end to end; optionally serve the portal live."""
    scenario, source = _load(scenario_path)
    if seed is not None:
        scenario.seed = seed
    if speed is not None:
        scenario.speed_factor = speed

    sim = Simulation(scenario, data_dir=data_dir, headless=headless,
                     scenario_source=source)
    if headless:
        summary = sim.run(until=until)
        _print_summary(summary, Path(data_dir))
        sim.close()
        return

    worker = threading.Thread(
        target=lambda: _print_summary(sim.run(until=until), Path(data_dir)),
        daemon=True)
    worker.start()
    app = create_app(sim, token=token, ui_dir=_find_ui_dir(ui_dir))
    click.echo(f"portal: http://{host}:{port}  (token: {token})")
    try:
        _serve(app, host, port)
    finally:
        sim.close()


def _print_summary(summary: dict, data_dir: Path) -> None:
    data_dir.mkdir(parents=True, exist_ok=True)
    (data_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    frames = summary["frames"]
    click.echo(f"run complete: {summary['sim_time_s']} simulated seconds")
    click.echo(f"  frames: sent {frames['sent']}, lost {frames['lost']}, "
               f"duplicated {frames['duplicated']}, accepted {frames['accepted']}, "
               f"rejected {sum(frames['rejected'].values())}")
    click.echo(f"  readings stored: {summary['readings_stored']}")
    click.echo(f"  alerts: {summary['alerts']['total']} "
               f"({summary['alerts']['by_severity']})")
    click.echo(f"  lighting energy: {summary['lights']['total_energy_wh']:.1f} Wh")
    click.echo(f"  forecast models trained: {summary['forecast']['models_trained']}")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), required=True)
def validate(scenario_path):
    """Check a scenario file; prints field-level errors."""
    try:
        scenario = load_scenario(scenario_path)
    except ScenarioInvalid as err:
        click.echo(f"INVALID: {len(err.errors)} error(s)")
        for line in err.errors:
            click.echo(f"  {line}")
        raise SystemExit(1)
    click.echo(f"OK: {scenario.name} ({len(scenario.hubs)} hubs, "
               f"{len(scenario.devices)} devices, "
               f"{len(scenario.light_groups)} light groups, "
               f"duration {scenario.duration_s}s)")


@main.command()
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--token", default=DEFAULT_TOKEN, show_default=True)
@click.option("--ui-dir", type=click.Path(exists=True), default=None)
def replay(data_dir, host, port, token, ui_dir):
    """Rebuild state from a run directory and serve read-only queries."""
    sim = replay_state(data_dir)
    click.echo(f"replayed {sim.store._seq} log records, "
               f"sim time {sim.sim_time}s; serving read-only")
    app = create_app(sim, token=token, read_only=True, ui_dir=_find_ui_dir(ui_dir))
    _serve(app, host, port)


@main.command()
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Directory for CSV exports and figures.")
def report(data_dir, out_dir):
    """Render CSV exports and matplotlib figures from a run directory."""
    from .report import generate_report

    written = generate_report(data_dir, out_dir)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
