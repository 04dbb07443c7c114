/** Shapes of the portal API responses the dashboard consumes. */

export interface Hub {
  hub_id: string;
  name: string;
  lat: number;
  lon: number;
  kind: "parking" | "tourist";
  ped_last_interval: number;
}

export interface LightState {
  group_id: string;
  hub_id: string;
  intensity_pct: number;
  mode: "auto" | "override";
  override_value: number | null;
  override_expires: number | null;
  p_max_w: number;
  cum_energy_wh: number;
  meter_eui?: string;
}

export interface Alert {
  alert_id: string;
  rule_id: string;
  source_ref: string;
  opened_at: number;
  severity: "info" | "warning" | "critical";
  department: string;
  status: "open" | "acked" | "resolved";
  escalation_tier: number;
  tier_label: string;
  acked_by: string | null;
}

export interface DeviceRecord {
  dev_eui: string;
  sensor_type: string;
  hub_id: string;
  label: string;
  last_seen: number | null;
  rejected_counts: Record<string, number>;
}

export interface SeriesPoint {
  t: number;
  iso: string;
  value: number;
}

export interface ForecastResponse {
  group_id: string;
  times: number[];
  values: number[];
}

export interface MetricsSummary {
  sim_time_s: number;
  display_time: string;
  frames: { sent: number; lost: number; duplicated: number; accepted: number };
  readings_stored: number;
  alerts: { total: number; open: number };
  lights: { total_energy_wh: number };
}

export interface PushEventBody {
  kind: string;
  sim_time_s: number;
  payload: Record<string, unknown>;
}

export type PushKind =
  | "reading"
  | "alert.opened"
  | "alert.escalated"
  | "alert.acked"
  | "alert.resolved"
  | "light.changed"
  | "forecast.updated"
  | "gap";
