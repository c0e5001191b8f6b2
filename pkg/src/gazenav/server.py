"""Live session endpoint: the browser UI streams cursor-gaze and wink events
over a websocket, the server advances the simulation at 25 Hz wall-clock and
broadcasts one state snapshot per tick to every connection.

One session per server.  Any number of viewers may connect; the first
connection to claim the driver role owns gaze/wink/reset input.
"""
import asyncio
import math
from dataclasses import asdict
from typing import Optional

from . import gaze as gz
from . import intent as it
from . import nav
from .sim import SimConfig, _estimate_obstacles, _corridor_blocked
from .world import (Pose, Scenario, VelocityCommand, dynamic_obstacle_position,
                    inflate, project_objects, step_kinematics)


class LiveSession:
    """Single-owner simulation loop fed by live gaze/wink input.

    All mutation happens in tick(); inbound events only stage the latest
    gaze sample (coalescing: last cursor position per tick wins) and pending
    wink/reset flags.
    """

    def __init__(self, scenario: Scenario, models: dict, cfg: SimConfig | None = None):
        self.scenario = scenario
        self.models = models
        self.cfg = cfg or SimConfig()
        self.dwa_cfg = nav.DwaConfig(**{**asdict(self.cfg.dwa),
                                        "robot_radius": scenario.robot_radius,
                                        "tick_dt": self.cfg.tick_dt})
        if self.cfg.inflate_radius is None:
            r = (scenario.robot_radius + self.dwa_cfg.safety_radius
                 + 2 * scenario.grid.resolution)
        else:
            r = self.cfg.inflate_radius
        self.grid_plan = inflate(scenario.grid, r)
        self.blocked_tree = nav.blocked_kdtree(scenario.grid)
        self.reset()

    # --- inbound events -------------------------------------------------
    def submit_gaze(self, x_px: float, y_px: float) -> None:
        self._pending_gaze = (float(x_px), float(y_px))

    def submit_wink(self) -> None:
        self._pending_wink = True

    def reset(self) -> None:
        self.k = 0
        self.pose = self.scenario.start_pose
        self.cmd = VelocityCommand(0.0, 0.0)
        self.buf = it.IntentBuffer(capacity=self.cfg.buffer_capacity)
        self.state = it.DecoderState.idle()
        self.avg_boxes: dict[str, gz.AveragedBox] = {}
        self.path: Optional[nav.PlannedPath] = None
        self.goal_point = None
        self.goal_object = None
        self._last_plan_t = -math.inf
        self._prev_dyn = None
        self._pending_gaze = None
        self._pending_wink = False
        self.pose_trail: list[tuple[float, float]] = []
        self.metrics = {"goal_dispatched": False, "dispatched_object": None,
                        "reached": False, "time_to_goal": None,
                        "stop_distance": None, "emergency_stops": 0,
                        "goals_completed": 0}
        self._in_emergency = False

    # --- the loop ---------------------------------------------------------
    def tick(self) -> dict:
        cfg = self.cfg
        sc = self.scenario
        t = self.k * cfg.tick_dt
        dyn_now = [dynamic_obstacle_position(o, t) for o in sc.dynamic_obstacles]

        gaze_px = self._pending_gaze
        self._pending_gaze = None
        wink = self._pending_wink
        self._pending_wink = False

        boxes = project_objects(sc.camera, self.pose, sc.objects)
        box_by_label = dict(boxes)
        for label, b in boxes:
            if label in self.avg_boxes:
                self.avg_boxes[label] = gz.update_averaged_box(self.avg_boxes[label], b)
            else:
                self.avg_boxes[label] = gz.AveragedBox(label, b)

        hit = None
        uv = None
        cls = None
        if gaze_px is not None:
            sample = gz.GazeSample(t, gaze_px[0], gaze_px[1])
            hit = gz.hit_test(sample, boxes)
            if hit is not None:
                uv = gz.normalize_gaze(sample, self.avg_boxes[hit], cfg.margin_frac)
                if uv is not None and hit in self.models:
                    cls, _ = self.models[hit].predict((uv.u, uv.v))
        it.push_frame(self.buf, hit, cls)
        v = it.vote(self.buf)

        self.state, dispatch_label = it.decoder_step(
            self.state, v, hit, wink, t, cfg.wink_window)
        if dispatch_label is not None:
            obj = sc.object_by_label(dispatch_label)
            self.goal_point = obj.goal_point
            self.goal_object = dispatch_label
            self.metrics["goal_dispatched"] = True
            self.metrics["dispatched_object"] = dispatch_label
            self.metrics["reached"] = False
            self._dispatch_t = t
            self.path = self._plan(t)

        emergency = False
        navigating = (self.state.phase == it.Phase.GOAL_DISPATCHED
                      and self.path is not None)
        if navigating:
            due = t - self._last_plan_t >= cfg.replan_interval
            blocked = (t - self._last_plan_t >= 0.5 and _corridor_blocked(
                self.path, dyn_now, sc, t))
            if due or blocked:
                newp = self._plan(t)
                if newp is not None:
                    self.path = newp
            estimates = _estimate_obstacles(sc, dyn_now, self._prev_dyn, cfg.tick_dt)
            self.cmd, diag = nav.dwa_step(self.pose, self.cmd, sc.grid,
                                          estimates, self.path, self.dwa_cfg,
                                          self.blocked_tree)
            emergency = diag.emergency_stop
            if emergency and not self._in_emergency:
                self.metrics["emergency_stops"] += 1
            self._in_emergency = emergency
            self.pose = step_kinematics(self.pose, self.cmd, cfg.tick_dt)
            self.pose_trail.append((self.pose.x, self.pose.y))
            if nav.goal_reached(self.pose, self.goal_point, cfg.r_goal):
                self.metrics["reached"] = True
                self.metrics["goals_completed"] += 1
                self.metrics["time_to_goal"] = (t + cfg.tick_dt) - self._dispatch_t
                self.metrics["stop_distance"] = math.hypot(
                    self.pose.x - self.goal_point[0],
                    self.pose.y - self.goal_point[1])
                self.state = it.reset_after_arrival(self.state)
                self.cmd = VelocityCommand(0.0, 0.0)
                self.path = None
        else:
            self.cmd = VelocityCommand(0.0, 0.0)
            self._in_emergency = False

        self._prev_dyn = dyn_now
        self.k += 1

        return {
            "type": "state",
            "t": t,
            "pose": [self.pose.x, self.pose.y, self.pose.theta],
            "cmd": [self.cmd.v, self.cmd.omega],
            "path": None if self.path is None else [list(w) for w in self.path.waypoints],
            "goal": None if self.goal_point is None else
                    {"object": self.goal_object, "point": list(self.goal_point),
                     "r_goal": cfg.r_goal},
            "boxes": [{"label": label,
                       "rect": [b.x_min, b.y_min, b.x_max, b.y_max],
                       "avg_rect": [self.avg_boxes[label].mean_box.x_min,
                                    self.avg_boxes[label].mean_box.y_min,
                                    self.avg_boxes[label].mean_box.x_max,
                                    self.avg_boxes[label].mean_box.y_max]}
                      for label, b in boxes],
            "gaze": {"raw": None if gaze_px is None else list(gaze_px),
                     "object": hit,
                     "u": None if uv is None else uv.u,
                     "v": None if uv is None else uv.v},
            "intent": {"vote": int(v), "buffer_fill": self.buf.fill,
                       "buffer_capacity": self.buf.capacity,
                       "state": self.state.phase.value,
                       "color": it.vote_color(v)},
            "obstacles": [{"x": p[0], "y": p[1], "radius": o.radius}
                          for o, p in zip(sc.dynamic_obstacles, dyn_now)],
            "emergency": emergency,
            "trail": [list(p) for p in self.pose_trail[-250:]],
            "metrics_partial": dict(self.metrics),
        }

    def _plan(self, t: float):
        self._last_plan_t = t
        try:
            return nav.plan_dijkstra(self.grid_plan, self.pose, self.goal_point)
        except ValueError:
            return None

    def init_message(self) -> dict:
        sc = self.scenario
        return {
            "type": "init",
            "grid": {"width": sc.grid.width_cells, "height": sc.grid.height_cells,
                     "resolution": sc.grid.resolution,
                     "occupied": [[int(i), int(j)] for i, j in sc.grid.occupied_cells()]},
            "objects": [{"label": o.label, "goal_point": list(o.goal_point)}
                        for o in sc.objects],
            "image": {"width": sc.camera.image_width,
                      "height": sc.camera.image_height},
            "robot_radius": sc.robot_radius,
            "tick_hz": round(1.0 / self.cfg.tick_dt),
            "buffer_capacity": self.cfg.buffer_capacity,
        }


def build_app(scenario: Scenario, models: dict, cfg: SimConfig | None = None,
              static_dir=None, tick_hz: float | None = None):
    """FastAPI app exposing /ws and (optionally) the built frontend at /."""
    from contextlib import asynccontextmanager

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.staticfiles import StaticFiles

    session = LiveSession(scenario, models, cfg)
    hz = tick_hz or round(1.0 / session.cfg.tick_dt)
    connections: list = []
    driver: dict = {"ws": None}

    async def loop():
        while True:
            snapshot = session.tick()
            dead = []
            for ws in connections:
                try:
                    await ws.send_json(snapshot)
                except Exception:
                    dead.append(ws)
            for ws in dead:
                if ws in connections:
                    connections.remove(ws)
                if driver["ws"] is ws:
                    driver["ws"] = None
            await asyncio.sleep(1.0 / hz)

    @asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(loop())
        yield
        task.cancel()

    app = FastAPI(title="gazenav live session", lifespan=lifespan)
    app.state.session = session

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        connections.append(ws)
        await ws.send_json(session.init_message())
        try:
            while True:
                msg = await ws.receive_json()
                kind = msg.get("type")
                if kind == "claim_driver":
                    if driver["ws"] is None or driver["ws"] is ws:
                        driver["ws"] = ws
                        await ws.send_json({"type": "role", "driver": True})
                    else:
                        await ws.send_json({"type": "role", "driver": False})
                elif driver["ws"] is not ws:
                    continue  # viewers cannot drive
                elif kind == "gaze":
                    session.submit_gaze(msg["x_px"], msg["y_px"])
                elif kind == "wink":
                    session.submit_wink()
                elif kind == "reset":
                    session.reset()
        except WebSocketDisconnect:
            pass
        finally:
            if ws in connections:
                connections.remove(ws)
            if driver["ws"] is ws:
                driver["ws"] = None

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="frontend")
    return app


def serve(scenario: Scenario, models: dict, host: str = "127.0.0.1",
          port: int = 8000, static_dir=None) -> int:
    import uvicorn

    from pathlib import Path
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        if bundled.is_dir():
            static_dir = bundled
    app = build_app(scenario, models, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0
