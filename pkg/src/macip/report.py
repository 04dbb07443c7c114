"""Post-run reporting: rebuilds state from a run directory and renders the
operator-facing summary as CSV exports plus matplotlib figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pedestrians import PED_CHANNEL
from .sim import Simulation, replay

FIGSIZE = (10, 5)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _energy_rows(sim: Simulation):
    per_group = {}
    for group_id in sorted(sim.lights):
        meter = sim.meter_devices[group_id]
        per_group[group_id] = sim.store.query_range(
            meter.eui_hex, "energy_wh", 0, 1 << 40, "sum_1h")
    return per_group


def _ped_rows(sim: Simulation):
    return {hub.hub_id: sim.store.query_range(hub.hub_id, PED_CHANNEL,
                                              0, 1 << 40, "sum_1h")
            for hub in sim.scenario.hubs}


def generate_report(data_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render CSVs and figures for a finished run; returns written paths."""
    sim = replay(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = sim.scenario
    written: list[Path] = []

    energy = _energy_rows(sim)
    written.append(_write_csv(
        out / "energy_hourly.csv",
        ["group_id", "t_s", "iso", "energy_wh"],
        [[gid, t, scenario.display_time(t), v]
         for gid, points in energy.items() for t, v in points]))

    peds = _ped_rows(sim)
    written.append(_write_csv(
        out / "pedestrians_hourly.csv",
        ["hub_id", "t_s", "iso", "count"],
        [[hub, t, scenario.display_time(t), v]
         for hub, points in peds.items() for t, v in points]))

    alerts = [a.to_json() for a in sim.alert_engine.list_alerts()]
    written.append(_write_csv(
        out / "alerts.csv",
        ["alert_id", "rule_id", "severity", "department", "status",
         "escalation_tier", "source_ref", "opened_at_s", "opened_iso"],
        [[a["alert_id"], a["rule_id"], a["severity"], a["department"],
          a["status"], a["escalation_tier"], a["source_ref"],
          a["opened_at"], scenario.display_time(a["opened_at"])]
         for a in alerts]))

    written.append(_write_csv(
        out / "devices.csv",
        ["dev_eui", "sensor_type", "hub_id", "last_seen_s", "rejected"],
        [[d.dev_eui, d.sensor_type, d.hub_id, d.last_seen,
          json.dumps(d.rejected_counts, sort_keys=True)]
         for d in sim.store.list_devices()]))

    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(sim.summary(), indent=2, sort_keys=True))
    written.append(summary_path)

    written.append(_fig_energy(sim, energy, out))
    written.append(_fig_pedestrians(sim, peds, out))
    written.append(_fig_alerts(sim, alerts, out))
    written.append(_fig_environment(sim, out))
    return written


def _hours(points):
    return [t / 3600.0 for t, _ in points]


def _fig_energy(sim: Simulation, energy, out: Path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for gid, points in energy.items():
        if points:
            ax.plot(_hours(points), [v for _, v in points], label=gid, lw=1.2)
    # overlay the trained forecast for the groups that have one
    for gid in sorted(sim.models):
        try:
            fc_out = sim.forecast_energy(gid, horizon=24)
        except Exception:
            continue
        ax.plot([t / 3600.0 for t in fc_out["times"]], fc_out["values"],
                "--", lw=1.0, label=f"{gid} forecast")
    ax.set_xlabel("simulated hour")
    ax.set_ylabel("energy (Wh / h)")
    ax.set_title("Street-light energy by group")
    if energy:
        ax.legend(fontsize=7, ncol=3)
    path = out / "energy_by_group.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _fig_pedestrians(sim: Simulation, peds, out: Path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for hub, points in peds.items():
        if points:
            ax.plot(_hours(points), [v for _, v in points], label=hub, lw=1.2)
    ax.set_xlabel("simulated hour")
    ax.set_ylabel("pedestrians / h")
    ax.set_title("Pedestrian counts by hub")
    if peds:
        ax.legend(fontsize=7, ncol=3)
    path = out / "pedestrians_by_hub.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _fig_alerts(sim: Simulation, alerts, out: Path) -> Path:
    counts: dict[str, int] = {}
    for a in alerts:
        counts[a["severity"]] = counts.get(a["severity"], 0) + 1
    fig, ax = plt.subplots(figsize=(6, 4))
    names = sorted(counts)
    ax.bar(names, [counts[n] for n in names],
           color=["#d9534f" if n == "critical" else "#f0ad4e" if n == "warning"
                  else "#5bc0de" for n in names])
    ax.set_ylabel("alerts")
    ax.set_title("Alerts by severity")
    path = out / "alerts_by_severity.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _fig_environment(sim: Simulation, out: Path) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(11, 7))
    panels = [("temp_c", "TempHumidity", "temperature (degC)"),
              ("co2_ppm", "AirQuality", "CO2 (ppm)"),
              ("fill_pct", "BinFill", "bin fill (%)"),
              ("distance_mm", "WaterLevel", "water distance (mm)")]
    by_type: dict[str, list] = {}
    for d in sim.store.list_devices():
        by_type.setdefault(d.sensor_type, []).append(d.dev_eui)
    for ax, (channel, stype, label) in zip(axes.flat, panels):
        for eui in by_type.get(stype, []):
            points = sim.store.query_range(eui, channel, 0, 1 << 40, "mean_1h")
            if points:
                ax.plot(_hours(points), [v for _, v in points], lw=1.0)
        ax.set_xlabel("simulated hour")
        ax.set_ylabel(label)
    fig.suptitle("Filtered sensor channels (hourly mean, all hubs)")
    path = out / "environment_overview.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
