/** Dashboard state container: applies REST snapshots and push events. Pure
 * data shuffling only - every number shown originates in an API response. */

import type { Alert, Hub, LightState, PushEventBody } from "./types.js";

export interface DashboardState {
  hubs: Hub[];
  lights: Map<string, LightState>;
  alerts: Map<string, Alert>;
  simTime: number;
  stale: boolean;
  connected: boolean;
  /** groups whose forecast changed since the last chart refresh */
  forecastDirty: Set<string>;
  readingsSeen: number;
}

export function emptyState(): DashboardState {
  return {
    hubs: [],
    lights: new Map(),
    alerts: new Map(),
    simTime: 0,
    stale: false,
    connected: false,
    forecastDirty: new Set(),
    readingsSeen: 0,
  };
}

export function loadSnapshot(
  state: DashboardState,
  hubs: Hub[],
  lights: LightState[],
  alerts: Alert[],
): void {
  state.hubs = hubs;
  state.lights = new Map(lights.map((l) => [l.group_id, l]));
  state.alerts = new Map(alerts.map((a) => [a.alert_id, a]));
  state.stale = false;
}

export function applyPush(state: DashboardState, kind: string, body: PushEventBody): void {
  state.simTime = Math.max(state.simTime, body.sim_time_s);
  switch (kind) {
    case "alert.opened":
    case "alert.escalated":
    case "alert.acked":
    case "alert.resolved": {
      const alert = body.payload as unknown as Alert;
      state.alerts.set(alert.alert_id, alert);
      break;
    }
    case "light.changed": {
      const light = body.payload as unknown as LightState;
      const existing = state.lights.get(light.group_id);
      // the push payload lacks meter_eui, which only the REST snapshot carries
      state.lights.set(light.group_id, {
        ...existing,
        ...light,
        meter_eui: existing?.meter_eui ?? light.meter_eui,
      });
      break;
    }
    case "forecast.updated": {
      const group = body.payload["group_id"];
      if (typeof group === "string") state.forecastDirty.add(group);
      break;
    }
    case "reading": {
      state.readingsSeen += 1;
      const entity = body.payload["entity"];
      const channel = body.payload["channel"];
      const value = body.payload["value"];
      if (channel === "ped_count" && typeof entity === "string"
          && typeof value === "number") {
        const hub = state.hubs.find((h) => h.hub_id === entity);
        if (hub) hub.ped_last_interval = value;
      }
      break;
    }
    default:
      break;
  }
}

export function markGap(state: DashboardState): void {
  state.stale = true;
}

export function openAlerts(state: DashboardState): Alert[] {
  return sortedAlerts(state).filter((a) => a.status === "open");
}

export function sortedAlerts(state: DashboardState): Alert[] {
  const severityRank = { critical: 0, warning: 1, info: 2 } as const;
  const statusRank = { open: 0, acked: 1, resolved: 2 } as const;
  return [...state.alerts.values()].sort(
    (a, b) =>
      statusRank[a.status] - statusRank[b.status] ||
      severityRank[a.severity] - severityRank[b.severity] ||
      b.opened_at - a.opened_at,
  );
}
