/** City Planning Portal dashboard: live metrics, alert handling and light
 * overrides on top of the portal API + event stream. */

import { ApiClient, ApiError } from "./api.js";
import { drawLines, drawMap, Line, PALETTE } from "./charts.js";
import { countdown, simClock, wh } from "./format.js";
import { StreamClient } from "./sse.js";
import {
  applyPush,
  DashboardState,
  emptyState,
  loadSnapshot,
  markGap,
  sortedAlerts,
} from "./state.js";
import type { PushEventBody, PushKind } from "./types.js";

const WINDOW_S = 24 * 3600; // charts show the last 24 simulated hours

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class Dashboard {
  private state: DashboardState = emptyState();
  private api!: ApiClient;
  private stream: StreamClient | null = null;
  private chartTimer: number | null = null;

  boot(): void {
    const saved = localStorage.getItem("macip-token") ?? "macip-dev-token";
    el<HTMLInputElement>("token-input").value = saved;
    el<HTMLButtonElement>("connect-btn").addEventListener("click", () => this.connect());
    this.connect();
  }

  private connect(): void {
    const token = el<HTMLInputElement>("token-input").value.trim();
    localStorage.setItem("macip-token", token);
    this.api = new ApiClient("", token);
    this.stream?.close();
    this.fullRefresh()
      .then(() => {
        el("login-bar").classList.add("ok");
        this.openStream();
        if (this.chartTimer !== null) window.clearInterval(this.chartTimer);
        this.chartTimer = window.setInterval(() => this.refreshCharts(), 5000);
      })
      .catch((err) => this.showBanner(this.describeError(err)));
  }

  private describeError(err: unknown): string {
    if (err instanceof ApiError && err.status === 401) {
      return "authentication failed: check the token";
    }
    return `API unreachable: ${err instanceof Error ? err.message : String(err)}`;
  }

  private openStream(): void {
    this.stream = new StreamClient(
      (last) => this.api.eventsUrl(last),
      {
        onEvent: (kind, body) => this.onPush(kind, body),
        onGap: () => {
          markGap(this.state);
          this.showBanner("stream gap: refreshing…");
          this.fullRefresh().then(() => this.hideBanner());
        },
        onConnectionChange: (connected) => {
          this.state.connected = connected;
          el("conn-dot").className = `dot ${connected ? "live" : "dead"}`;
          if (!connected) this.showBanner("stream disconnected, retrying…");
          else if (!this.state.stale) this.hideBanner();
        },
      },
    );
    this.stream.connect();
  }

  private onPush(kind: PushKind, body: PushEventBody): void {
    applyPush(this.state, kind, body);
    if (kind.startsWith("alert.")) this.renderAlerts();
    if (kind === "light.changed") this.renderLights();
    if (kind === "forecast.updated") this.refreshCharts();
    if (kind === "reading") this.renderMap();
    el("sim-clock").textContent = simClock(this.state.simTime);
  }

  private async fullRefresh(): Promise<void> {
    const [hubs, lights, alerts, summary] = await Promise.all([
      this.api.hubs(),
      this.api.lights(),
      this.api.alerts(),
      this.api.summary(),
    ]);
    loadSnapshot(this.state, hubs, lights, alerts);
    this.state.simTime = summary.sim_time_s;
    el("sim-clock").textContent = simClock(summary.sim_time_s);
    el("stat-frames").textContent = String(summary.frames.accepted);
    el("stat-readings").textContent = String(summary.readings_stored);
    el("stat-energy").textContent = wh(summary.lights.total_energy_wh);
    this.renderAlerts();
    this.renderLights();
    this.renderMap();
    await Promise.all([this.refreshCharts(), this.renderDevices()]);
    this.state.stale = false;
    this.hideBanner();
  }

  // ---- panels -------------------------------------------------------------

  private renderMap(): void {
    drawMap(el<HTMLCanvasElement>("map-canvas"), this.state.hubs.map((h) => ({
      label: h.hub_id,
      lat: h.lat,
      lon: h.lon,
      kind: h.kind,
      note: `${h.ped_last_interval} ped`,
    })));
  }

  private renderAlerts(): void {
    const list = el("alert-list");
    const alerts = sortedAlerts(this.state);
    list.innerHTML = "";
    el("alert-empty").style.display = alerts.length ? "none" : "block";
    for (const alert of alerts.slice(0, 60)) {
      const row = document.createElement("div");
      row.className = `alert-row sev-${alert.severity}`;
      const tier = alert.escalation_tier > 0
        ? `<span class="tier">tier ${alert.escalation_tier} (${alert.tier_label})</span>`
        : "";
      row.innerHTML = `
        <span class="badge ${alert.status}">${alert.status}</span>
        <span class="sev">${alert.severity}</span>
        <span class="rule">${alert.rule_id}</span>
        <span class="src">${alert.source_ref}</span>
        <span class="dept">${alert.department}</span>
        ${tier}
        <span class="when">${simClock(alert.opened_at)}</span>`;
      const actions = document.createElement("span");
      actions.className = "actions";
      if (alert.status === "open") {
        actions.appendChild(this.alertButton("Ack", () =>
          this.api.ackAlert(alert.alert_id, "cpp-operator")));
      }
      if (alert.status !== "resolved") {
        actions.appendChild(this.alertButton("Resolve", () =>
          this.api.resolveAlert(alert.alert_id, "cpp-operator")));
      }
      row.appendChild(actions);
      list.appendChild(row);
    }
  }

  private alertButton(label: string, action: () => Promise<unknown>): HTMLButtonElement {
    const btn = document.createElement("button");
    btn.textContent = label;
    btn.addEventListener("click", async () => {
      btn.disabled = true;
      try {
        await action();
        // the push event updates the row; nothing else to do here
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          const fresh = await this.api.alerts();
          loadSnapshot(this.state, this.state.hubs,
                       [...this.state.lights.values()], fresh);
          this.renderAlerts();
        } else {
          this.showBanner(this.describeError(err));
        }
      } finally {
        btn.disabled = false;
      }
    });
    return btn;
  }

  private renderLights(): void {
    const host = el("light-cards");
    host.innerHTML = "";
    for (const light of [...this.state.lights.values()]
        .sort((a, b) => a.group_id.localeCompare(b.group_id))) {
      const card = document.createElement("div");
      card.className = "light-card";
      const override = light.mode === "override"
        ? `<span class="mode override">override ${light.override_value}% · ` +
          `${countdown(light.override_expires, this.state.simTime)}</span>`
        : `<span class="mode auto">auto</span>`;
      card.innerHTML = `
        <div class="light-head"><b>${light.group_id}</b> <small>${light.hub_id}</small></div>
        <div class="light-bar"><div class="light-fill" style="width:${light.intensity_pct}%"></div></div>
        <div class="light-info">${light.intensity_pct.toFixed(0)}% · ${wh(light.cum_energy_wh)} · ${override}</div>`;
      const controls = document.createElement("div");
      controls.className = "light-controls";
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "100";
      slider.value = String(Math.round(light.intensity_pct));
      const ttl = document.createElement("input");
      ttl.type = "number";
      ttl.value = "600";
      ttl.min = "1";
      ttl.title = "override TTL (s)";
      const apply = document.createElement("button");
      apply.textContent = "Override";
      apply.addEventListener("click", async () => {
        apply.disabled = true;
        try {
          await this.api.overrideLight(light.group_id, Number(slider.value),
                                       Number(ttl.value));
        } catch (err) {
          this.showBanner(this.describeError(err));
        } finally {
          apply.disabled = false;
        }
      });
      controls.append(slider, ttl, apply);
      card.appendChild(controls);
      host.appendChild(card);
    }
  }

  private async renderDevices(): Promise<void> {
    const devices = await this.api.devices();
    const rows = devices.map((d) => {
      const rejected = Object.entries(d.rejected_counts)
        .map(([reason, n]) => `${reason}:${n}`)
        .join(" ") || "-";
      const seen = d.last_seen === null ? "never" : simClock(d.last_seen);
      return `<tr><td>${d.dev_eui}</td><td>${d.sensor_type}</td>` +
             `<td>${d.hub_id}</td><td>${seen}</td><td>${rejected}</td></tr>`;
    });
    el("device-rows").innerHTML = rows.join("");
  }

  private async refreshCharts(): Promise<void> {
    const fromS = Math.max(0, this.state.simTime - WINDOW_S);
    const pedLines: Line[] = [];
    for (const [i, hub] of this.state.hubs.entries()) {
      const points = await this.api.pedestrians(hub.hub_id, fromS);
      pedLines.push({
        label: hub.hub_id,
        color: PALETTE[i % PALETTE.length],
        points: points.map((p) => ({ x: p.t / 3600, y: p.value })),
      });
    }
    drawLines(el<HTMLCanvasElement>("ped-canvas"), pedLines, "sim hour");

    const energyLines: Line[] = [];
    let index = 0;
    for (const light of this.state.lights.values()) {
      if (!light.meter_eui) continue;
      const color = PALETTE[index % PALETTE.length];
      const actual = await this.api.energySeries(light.meter_eui, fromS);
      energyLines.push({
        label: light.group_id,
        color,
        points: actual.map((p) => ({ x: p.t / 3600, y: p.value })),
      });
      const forecast = await this.api.forecast(light.group_id, 24);
      if (forecast) {
        energyLines.push({
          label: `${light.group_id} forecast`,
          color,
          dashed: true,
          points: forecast.times.map((t, k) => ({
            x: t / 3600,
            y: forecast.values[k],
          })),
        });
      }
      index += 1;
    }
    this.state.forecastDirty.clear();
    drawLines(el<HTMLCanvasElement>("energy-canvas"), energyLines, "sim hour");
  }

  private showBanner(text: string): void {
    const banner = el("banner");
    banner.textContent = text;
    banner.style.display = "block";
  }

  private hideBanner(): void {
    el("banner").style.display = "none";
  }
}

new Dashboard().boot();
