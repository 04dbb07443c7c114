/** Thin fetch wrapper for the portal API. All displayed numbers come from
 * these responses; the client never derives domain values itself. */

import type {
  Alert,
  DeviceRecord,
  ForecastResponse,
  Hub,
  LightState,
  MetricsSummary,
  SeriesPoint,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string,
    private token: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  eventsUrl(lastEventId?: number): string {
    const resume = lastEventId !== undefined ? `&last_event_id=${lastEventId}` : "";
    return `${this.base}/api/v1/events?token=${encodeURIComponent(this.token)}${resume}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}/api/v1${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init?.headers ?? {}),
      },
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  summary(): Promise<MetricsSummary> {
    return this.request("/metrics/summary");
  }

  async hubs(): Promise<Hub[]> {
    return (await this.request<{ hubs: Hub[] }>("/hubs")).hubs;
  }

  async lights(): Promise<LightState[]> {
    return (await this.request<{ lights: LightState[] }>("/lights")).lights;
  }

  async alerts(status?: string): Promise<Alert[]> {
    const qs = status ? `?status=${status}&limit=1000` : "?limit=1000";
    return (await this.request<{ alerts: Alert[] }>(`/alerts${qs}`)).alerts;
  }

  async devices(): Promise<DeviceRecord[]> {
    return (await this.request<{ devices: DeviceRecord[] }>("/devices?limit=1000"))
      .devices;
  }

  async pedestrians(hub: string, fromS: number): Promise<SeriesPoint[]> {
    return (
      await this.request<{ points: SeriesPoint[] }>(
        `/pedestrians?hub=${encodeURIComponent(hub)}&agg=sum_1h&from_s=${fromS}`,
      )
    ).points;
  }

  async energySeries(meterEui: string, fromS: number): Promise<SeriesPoint[]> {
    return (
      await this.request<{ points: SeriesPoint[] }>(
        `/devices/${meterEui}/timeseries?channel=energy_wh&agg=sum_1h&from_s=${fromS}`,
      )
    ).points;
  }

  async forecast(group: string, horizon: number): Promise<ForecastResponse | null> {
    try {
      return await this.request<ForecastResponse>(
        `/forecast/energy?group=${encodeURIComponent(group)}&horizon=${horizon}`,
      );
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return null;
      throw err;
    }
  }

  overrideLight(groupId: string, intensity: number, ttlS: number): Promise<LightState> {
    return this.request(`/lights/${encodeURIComponent(groupId)}/override`, {
      method: "POST",
      body: JSON.stringify({ intensity, ttl_s: ttlS }),
    });
  }

  ackAlert(alertId: string, actor: string): Promise<Alert> {
    return this.request(`/alerts/${encodeURIComponent(alertId)}/ack`, {
      method: "POST",
      body: JSON.stringify({ actor }),
    });
  }

  resolveAlert(alertId: string, actor: string): Promise<Alert> {
    return this.request(`/alerts/${encodeURIComponent(alertId)}/resolve`, {
      method: "POST",
      body: JSON.stringify({ actor }),
    });
  }
}
