"""Portal HTTP API: read endpoints over the store and engines, the operator
command path (overrides, ack/resolve), detection ingestion, and the SSE
event stream with replay/gap semantics. Static bearer-token auth."""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import forecast as fc
from .alerts import InvalidTransition, UnknownAlert
from .lighting import InvalidValue, UnknownGroup
from .pedestrians import DETECTION_KINDS, DetectionEvent, UnknownHub
from .sim import Simulation
from .store import AGGREGATIONS, UnknownSeries

DEFAULT_TOKEN = "macip-dev-token"
SSE_KEEPALIVE_S = 1.0


class OverrideRequest(BaseModel):
    intensity: float = Field(ge=0, le=100)
    ttl_s: int = Field(gt=0)


class ActorRequest(BaseModel):
    actor: str = "operator"


class DetectionRequest(BaseModel):
    hub_id: str
    sim_time_s: int = Field(ge=0)
    count: int = Field(ge=0)
    kind: str = "count"


def create_app(sim: Simulation, token: str = DEFAULT_TOKEN,
               read_only: bool = False, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="macip portal", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def authed(request: Request,
               token_qs: str | None = Query(default=None, alias="token")) -> None:
        header = request.headers.get("authorization", "")
        if header == f"Bearer {token}" or token_qs == token:
            return
        raise HTTPException(status_code=401, detail="bad token")

    def guard_commands() -> None:
        if read_only:
            raise HTTPException(status_code=409,
                                detail="replay mode is read-only")

    scenario = sim.scenario

    def point_list(points: list[tuple[int, float]]) -> list[dict]:
        return [{"t": t, "iso": scenario.display_time(t), "value": v}
                for t, v in points]

    def parse_agg(agg: str) -> str:
        if agg not in AGGREGATIONS:
            raise HTTPException(status_code=400,
                                detail=f"agg must be one of {AGGREGATIONS}")
        return agg

    # ---- read endpoints ---------------------------------------------------

    @app.get("/api/v1/metrics/summary", dependencies=[Depends(authed)])
    def metrics_summary():
        summary = sim.summary()
        summary["display_time"] = scenario.display_time(sim.sim_time)
        summary["epoch"] = scenario.epoch
        return summary

    @app.get("/api/v1/devices", dependencies=[Depends(authed)])
    def list_devices(limit: int = Query(default=100, ge=1, le=1000),
                     offset: int = Query(default=0, ge=0)):
        devices = [d.to_json() for d in sim.store.list_devices()]
        return {"total": len(devices), "devices": devices[offset:offset + limit]}

    @app.get("/api/v1/devices/{eui}/timeseries", dependencies=[Depends(authed)])
    def device_timeseries(eui: str, channel: str,
                          agg: str = "raw",
                          from_s: int = Query(default=0, ge=0),
                          to_s: int = Query(default=1 << 40)):
        try:
            points = sim.store.query_range(eui, channel, from_s, to_s, parse_agg(agg))
        except UnknownSeries:
            raise HTTPException(status_code=404, detail=f"unknown device {eui}")
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        return {"dev_eui": eui, "channel": channel, "agg": agg,
                "points": point_list(points)}

    @app.get("/api/v1/hubs", dependencies=[Depends(authed)])
    def list_hubs():
        return {"hubs": [{
            "hub_id": h.hub_id, "name": h.name, "lat": h.lat, "lon": h.lon,
            "kind": h.kind,
            "ped_last_interval": sim.ped_last.get(h.hub_id, 0),
        } for h in scenario.hubs]}

    @app.get("/api/v1/pedestrians", dependencies=[Depends(authed)])
    def pedestrians(hub: str, agg: str = "raw",
                    from_s: int = Query(default=0, ge=0),
                    to_s: int = Query(default=1 << 40)):
        try:
            points = sim.store.query_range(hub, "ped_count", from_s, to_s, parse_agg(agg))
        except UnknownSeries:
            raise HTTPException(status_code=404, detail=f"unknown hub {hub}")
        return {"hub_id": hub, "agg": agg, "points": point_list(points)}

    @app.get("/api/v1/lights", dependencies=[Depends(authed)])
    def list_lights():
        with sim.lock:
            out = []
            for group_id in sorted(sim.lights):
                state = sim.lights[group_id].to_json()
                state["meter_eui"] = sim.meter_devices[group_id].eui_hex
                out.append(state)
        return {"lights": out}

    @app.get("/api/v1/alerts", dependencies=[Depends(authed)])
    def list_alerts(status: str | None = None,
                    limit: int = Query(default=100, ge=1, le=1000),
                    offset: int = Query(default=0, ge=0)):
        if status is not None and status not in ("open", "acked", "resolved"):
            raise HTTPException(status_code=400, detail="bad status filter")
        with sim.lock:
            alerts = [a.to_json() for a in sim.alert_engine.list_alerts(status)]
        return {"total": len(alerts), "alerts": alerts[offset:offset + limit]}

    @app.get("/api/v1/forecast/energy", dependencies=[Depends(authed)])
    def forecast_energy(group: str, horizon: int = Query(default=24, ge=1, le=168)):
        try:
            with sim.lock:
                result = sim.forecast_energy(group, horizon)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"no trained model for group {group}")
        except fc.InsufficientData as err:
            raise HTTPException(status_code=404, detail=str(err))
        result["times_iso"] = [scenario.display_time(t) for t in result["times"]]
        return result

    # ---- command endpoints -------------------------------------------------

    @app.post("/api/v1/lights/{group_id}/override", dependencies=[Depends(authed)])
    def override_light(group_id: str, body: OverrideRequest):
        guard_commands()
        try:
            state = sim.submit_command(
                lambda: sim.override_light(group_id, body.intensity, body.ttl_s))
        except UnknownGroup:
            raise HTTPException(status_code=404, detail=f"unknown group {group_id}")
        except InvalidValue as err:
            raise HTTPException(status_code=400, detail=str(err))
        return state

    @app.post("/api/v1/alerts/{alert_id}/ack", dependencies=[Depends(authed)])
    def ack_alert(alert_id: str, body: ActorRequest):
        guard_commands()
        return _alert_command(lambda: sim.submit_command(
            lambda: sim.ack_alert(alert_id, body.actor)), alert_id)

    @app.post("/api/v1/alerts/{alert_id}/resolve", dependencies=[Depends(authed)])
    def resolve_alert(alert_id: str, body: ActorRequest):
        guard_commands()
        return _alert_command(lambda: sim.submit_command(
            lambda: sim.resolve_alert(alert_id, body.actor)), alert_id)

    def _alert_command(fn, alert_id: str):
        try:
            return fn()
        except UnknownAlert:
            raise HTTPException(status_code=404, detail=f"unknown alert {alert_id}")
        except InvalidTransition as err:
            raise HTTPException(status_code=409, detail=str(err))

    @app.post("/api/v1/forecast/retrain", dependencies=[Depends(authed)])
    def retrain(group: str):
        guard_commands()
        try:
            return sim.submit_command(lambda: sim.retrain_command(group),
                                      timeout=120.0)
        except UnknownGroup:
            raise HTTPException(status_code=404, detail=f"unknown group {group}")
        except fc.InsufficientData as err:
            raise HTTPException(status_code=409, detail=str(err))

    @app.post("/api/v1/ingest/detections", dependencies=[Depends(authed)])
    def ingest_detections(body: DetectionRequest):
        guard_commands()
        if body.kind not in DETECTION_KINDS:
            raise HTTPException(status_code=400,
                                detail=f"kind must be one of {DETECTION_KINDS}")
        try:
            sim.submit_command(lambda: sim.ingest_external_detection(
                DetectionEvent(body.hub_id, body.sim_time_s, body.count, body.kind)))
        except UnknownHub:
            raise HTTPException(status_code=404, detail=f"unknown hub {body.hub_id}")
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        return {"status": "accepted"}

    # ---- event stream --------------------------------------------------------

    @app.get("/api/v1/events", dependencies=[Depends(authed)])
    def events(request: Request, last_event_id: int | None = Query(default=None)):
        header_id = request.headers.get("last-event-id")
        if last_event_id is None and header_id is not None:
            try:
                last_event_id = int(header_id)
            except ValueError:
                raise HTTPException(status_code=400, detail="bad Last-Event-ID")

        def stream():
            sub, replayed = sim.bus.subscribe(last_event_id)
            try:
                yield ": connected\n\n"
                for event in replayed:
                    yield event.sse()
                while True:
                    event = sub.get(timeout=SSE_KEEPALIVE_S)
                    if event is None:
                        yield ": keepalive\n\n"
                    else:
                        yield event.sse()
            finally:
                sub.close()

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
