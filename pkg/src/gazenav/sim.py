"""End-to-end scenario execution: scripted (or live) gaze drives the intention
decoder, a confirmed goal starts the navigation stack, and per-run metrics are
collected, aggregated over batches, and re-derivable from the event log.

The simulation ticks at 25 Hz.  All randomness flows from the run seed, so a
run is bit-reproducible from (scenario, script, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import gaze as gz
from . import intent as it
from . import nav
from .classify import KnnModel, SvmModel
from .world import (OccupancyGrid, Pose, Scenario, VelocityCommand,
                    dynamic_obstacle_position, inflate, project_objects,
                    scenario_to_dict, scenario_from_dict, step_kinematics)

TICK_DT = 0.04  # 25 Hz
DEFAULT_TIMEOUT = 120.0


# --- gaze scripts -----------------------------------------------------------

@dataclass(frozen=True)
class LookAt:
    t: float
    object: str
    cls: gz.TaskClass


@dataclass(frozen=True)
class LookAway:
    t: float


@dataclass(frozen=True)
class Wink:
    t: float


ScriptEvent = LookAt | LookAway | Wink


@dataclass(frozen=True)
class GazeScript:
    """Timeline of gaze phases and wink events at strictly increasing times."""
    timeline: tuple[ScriptEvent, ...]

    def __post_init__(self):
        ts = [e.t for e in self.timeline]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("script times must be strictly increasing")

    def phase_at(self, t: float) -> LookAt | LookAway:
        """The gaze phase active at time t (LookAway before the first entry)."""
        active: LookAt | LookAway = LookAway(-math.inf)
        for e in self.timeline:
            if isinstance(e, Wink) or e.t > t:
                continue
            active = e
        return active

    def wink_times(self) -> list[float]:
        return [e.t for e in self.timeline if isinstance(e, Wink)]

    def intended_target(self) -> Optional[str]:
        """Object of the first interactive look, the scripted navigation goal."""
        for e in self.timeline:
            if isinstance(e, LookAt) and e.cls == gz.TaskClass.INTERACTIVE:
                return e.object
        return None

    def end_time(self) -> float:
        return self.timeline[-1].t if self.timeline else 0.0

    def to_dict(self) -> dict:
        out = []
        for e in self.timeline:
            if isinstance(e, LookAt):
                out.append({"t": e.t, "phase": "look_at", "object": e.object,
                            "class": int(e.cls)})
            elif isinstance(e, LookAway):
                out.append({"t": e.t, "phase": "look_away"})
            else:
                out.append({"t": e.t, "phase": "wink"})
        return {"timeline": out}


def script_from_dict(data: dict) -> GazeScript:
    if not isinstance(data, dict) or "timeline" not in data:
        raise ValueError("script must be an object with a 'timeline' list")
    events: list[ScriptEvent] = []
    for e in data["timeline"]:
        kind = e.get("phase")
        if kind == "look_at":
            events.append(LookAt(float(e["t"]), e["object"],
                                 gz.TaskClass(int(e["class"]))))
        elif kind == "look_away":
            events.append(LookAway(float(e["t"])))
        elif kind == "wink":
            events.append(Wink(float(e["t"])))
        else:
            raise ValueError(f"unknown script phase {kind!r}")
    return GazeScript(tuple(events))


# --- configuration and metrics ----------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    tick_dt: float = TICK_DT
    timeout: float = DEFAULT_TIMEOUT
    duration: Optional[float] = None  # end early even without goal/arrival
    margin_frac: float = 0.10
    wink_window: float = it.DEFAULT_WINK_WINDOW
    buffer_capacity: int = it.DEFAULT_CAPACITY
    r_goal: float = nav.DEFAULT_R_GOAL
    replan_interval: float = 2.0
    dwa: nav.DwaConfig = field(default_factory=nav.DwaConfig)
    inflate_radius: Optional[float] = None  # None: robot radius

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


@dataclass
class RunMetrics:
    reached: bool = False
    time_to_goal: Optional[float] = None     # dispatch -> arrival, seconds
    stop_distance: Optional[float] = None    # defined only on arrival
    static_collisions: int = 0               # contact episodes
    dynamic_collisions: int = 0
    emergency_stops: int = 0                 # stop episodes
    goal_dispatched: bool = False
    dispatched_object: Optional[str] = None
    dispatch_time: Optional[float] = None
    goal_correct: Optional[bool] = None
    intent_latency: Optional[float] = None   # interactive gaze onset -> vote onset
    sim_time: float = 0.0
    static_exposed: bool = False
    dynamic_exposed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_from_dict(d: dict) -> RunMetrics:
    return RunMetrics(**d)


class ConfigurationError(ValueError):
    """Run inputs are inconsistent (e.g. a scripted object has no model)."""


# --- collision geometry -------------------------------------------------------

def static_contact(grid: OccupancyGrid, x: float, y: float, radius: float) -> bool:
    """True when the robot disc overlaps any Occupied cell square."""
    res = grid.resolution
    reach = int(math.ceil(radius / res)) + 1
    cx, cy = grid.cell_of(x, y)
    for ix in range(max(0, cx - reach), min(grid.width_cells, cx + reach + 1)):
        for iy in range(max(0, cy - reach), min(grid.height_cells, cy + reach + 1)):
            if grid.cells[ix, iy] != 1:  # only truly occupied cells collide
                continue
            dx = max(ix * res - x, 0.0, x - (ix + 1) * res)
            dy = max(iy * res - y, 0.0, y - (iy + 1) * res)
            if math.hypot(dx, dy) < radius:
                return True
    return False


# --- the simulation loop -------------------------------------------------------

Model = KnnModel | SvmModel


def run_scenario(scenario: Scenario, script: GazeScript,
                 models: dict[str, Model], cfg: SimConfig | None = None,
                 seed: Optional[int] = None,
                 gen_params: dict[str, gz.GazeGenParams] | None = None,
                 ) -> tuple[RunMetrics, list[dict]]:
    """Run one scripted session; returns (metrics, event log).

    The event log is a list of JSON-ready dicts: a run record, one tick
    record per tick, plan records on (re)planning, and a final metrics
    record.  Deterministic given (scenario, script, seed).
    """
    cfg = cfg or SimConfig()
    seed = scenario.rng_seed if seed is None else seed
    for e in script.timeline:
        if isinstance(e, LookAt):
            try:
                scenario.object_by_label(e.object)
            except KeyError:
                raise ConfigurationError(f"scripted object {e.object!r} not in scenario")
            if e.object not in models:
                raise ConfigurationError(f"no model for scripted object {e.object!r}")

    rng = np.random.default_rng([seed, 811])
    dt = cfg.tick_dt
    dwa_cfg = nav.DwaConfig(**{**asdict(cfg.dwa),
                               "robot_radius": scenario.robot_radius,
                               "tick_dt": dt})
    # The planner works on a wider inflation than the controller's
    # admissibility margin, so planned paths stay inside the space the
    # controller will actually accept; the controller itself measures
    # clearance against the raw occupied cells.
    if cfg.inflate_radius is None:
        inflate_r = (scenario.robot_radius + dwa_cfg.safety_radius
                     + 2 * scenario.grid.resolution)
    else:
        inflate_r = cfg.inflate_radius
    grid_inf = inflate(scenario.grid, inflate_r)
    control_grid = scenario.grid
    blocked_tree = nav.blocked_kdtree(control_grid)

    pose = scenario.start_pose
    cmd = VelocityCommand(0.0, 0.0)
    buf = it.IntentBuffer(capacity=cfg.buffer_capacity)
    state = it.DecoderState.idle()
    avg_boxes: dict[str, gz.AveragedBox] = {}
    winks = script.wink_times()
    wink_i = 0

    metrics = RunMetrics()
    events: list[dict] = []
    events.append({"type": "run", "scenario": scenario_to_dict(scenario),
                   "script": script.to_dict(), "seed": seed,
                   "cfg": cfg.to_dict()})

    path: Optional[nav.PlannedPath] = None
    goal_point: Optional[tuple[float, float]] = None
    last_plan_t: float = -math.inf
    prev_dyn: list[tuple[float, float]] | None = None
    in_static_contact = False
    in_dynamic_contact = [False] * len(scenario.dynamic_obstacles)
    in_emergency = False
    arrived = False

    end_t = cfg.timeout if cfg.duration is None else min(cfg.timeout, cfg.duration)
    n_ticks = int(round(end_t / dt))

    def plan_from(p: Pose, t: float) -> Optional[nav.PlannedPath]:
        nonlocal last_plan_t
        last_plan_t = t
        try:
            new = nav.plan_dijkstra(grid_inf, p, goal_point)
        except ValueError:
            new = None
        events.append({"type": "plan", "t": t,
                       "waypoints": [list(w) for w in (new.waypoints if new else [])],
                       "cost": None if new is None else new.total_cost})
        return new

    for k in range(n_ticks):
        t = k * dt
        dyn_now = [dynamic_obstacle_position(o, t) for o in scenario.dynamic_obstacles]

        # wink events due at this tick
        wink = False
        while wink_i < len(winks) and winks[wink_i] <= t:
            wink = True
            wink_i += 1

        boxes = project_objects(scenario.camera, pose, scenario.objects)
        box_by_label = dict(boxes)
        for label, b in boxes:
            if label in avg_boxes:
                avg_boxes[label] = gz.update_averaged_box(avg_boxes[label], b)
            else:
                avg_boxes[label] = gz.AveragedBox(label, b)

        phase = script.phase_at(t)
        sample = _scripted_sample(rng, phase, box_by_label, scenario, t)

        hit = gz.hit_test(sample, boxes) if sample is not None else None
        uv = None
        cls: Optional[gz.TaskClass] = None
        if hit is not None:
            uv = gz.normalize_gaze(sample, avg_boxes[hit], cfg.margin_frac)
            if uv is not None and hit in models:
                cls, _ = models[hit].predict((uv.u, uv.v))
        it.push_frame(buf, hit, cls)
        v = it.vote(buf)

        if metrics.intent_latency is None and v == gz.TaskClass.INTERACTIVE \
                and isinstance(phase, LookAt) and phase.cls == gz.TaskClass.INTERACTIVE:
            metrics.intent_latency = t - phase.t

        state, dispatch_label = it.decoder_step(
            state, v, hit, wink, t, cfg.wink_window)
        dispatch = None
        if dispatch_label is not None:
            obj = scenario.object_by_label(dispatch_label)
            goal_point = obj.goal_point
            dispatch = it.GoalDispatch(dispatch_label, goal_point, t)
            metrics.goal_dispatched = True
            metrics.dispatched_object = dispatch_label
            metrics.dispatch_time = t
            intended = script.intended_target()
            metrics.goal_correct = (intended == dispatch_label)
            path = plan_from(pose, t)
            if path is not None:
                metrics.static_exposed = _static_on_corridor(
                    scenario.grid, path, scenario.robot_radius)

        # navigation
        diag = None
        navigating = (state.phase == it.Phase.GOAL_DISPATCHED
                      and path is not None and not arrived)
        if navigating:
            # replan periodically, or sooner when an obstacle sits on the
            # corridor (rate-limited so a slow crossing does not replan every tick)
            due = t - last_plan_t >= cfg.replan_interval
            blocked = (t - last_plan_t >= 0.5
                       and _corridor_blocked(path, dyn_now, scenario, t))
            if due or blocked:
                replanned = plan_from(pose, t)
                if replanned is not None:
                    path = replanned
            estimates = _estimate_obstacles(scenario, dyn_now, prev_dyn, dt)
            cmd, diag = nav.dwa_step(pose, cmd, control_grid, estimates, path,
                                     dwa_cfg, blocked_tree)
            if diag.emergency_stop and not in_emergency:
                metrics.emergency_stops += 1
            in_emergency = diag.emergency_stop
            pose = step_kinematics(pose, cmd, dt)
            if nav.goal_reached(pose, goal_point, cfg.r_goal):
                arrived = True
                metrics.reached = True
                metrics.time_to_goal = (t + dt) - metrics.dispatch_time
                metrics.stop_distance = math.hypot(pose.x - goal_point[0],
                                                   pose.y - goal_point[1])
                state = it.reset_after_arrival(state)
                cmd = VelocityCommand(0.0, 0.0)
        else:
            cmd = VelocityCommand(0.0, 0.0)
            in_emergency = False

        # ground-truth collision accounting at the end-of-tick state
        t_next = t + dt
        dyn_next = [dynamic_obstacle_position(o, t_next)
                    for o in scenario.dynamic_obstacles]
        sc = static_contact(scenario.grid, pose.x, pose.y, scenario.robot_radius)
        if sc and not in_static_contact:
            metrics.static_collisions += 1
        in_static_contact = sc
        dc_any = False
        for i, (o, p) in enumerate(zip(scenario.dynamic_obstacles, dyn_next)):
            dc = math.hypot(pose.x - p[0], pose.y - p[1]) < scenario.robot_radius + o.radius
            if dc and not in_dynamic_contact[i]:
                metrics.dynamic_collisions += 1
            in_dynamic_contact[i] = dc
            dc_any = dc_any or dc

        events.append({
            "type": "tick", "i": k, "t": t,
            "pose": [pose.x, pose.y, pose.theta],
            "cmd": [cmd.v, cmd.omega],
            "gaze": None if sample is None else [sample.x_px, sample.y_px],
            "object": hit,
            "uv": None if uv is None else [uv.u, uv.v],
            "cls": None if cls is None else int(cls),
            "vote": int(v), "fill": buf.fill,
            "state": state.phase.value,
            "color": it.vote_color(v),
            "dispatch": None if dispatch is None else dispatch.to_dict(),
            "emergency": bool(diag.emergency_stop) if diag else False,
            "admissible": diag.admissible_count if diag else None,
            "window": list(diag.window) if diag else None,
            "clearance": diag.chosen_clearance if diag else None,
            "dyn": [list(p) for p in dyn_next],
            "dyn_est": [list(e) for e in _estimate_obstacles(
                scenario, dyn_now, prev_dyn, dt)] if navigating else None,
            "static_contact": sc, "dynamic_contact": dc_any,
        })
        prev_dyn = dyn_now
        metrics.sim_time = t_next
        if arrived:
            break

    metrics.dynamic_exposed = len(scenario.dynamic_obstacles) > 0
    events.append({"type": "metrics", **metrics.to_dict()})
    return metrics, events


def _scripted_sample(rng: np.random.Generator, phase: LookAt | LookAway,
                     box_by_label: dict[str, gz.BBox2D], scenario: Scenario,
                     t: float) -> Optional[gz.GazeSample]:
    cam = scenario.camera
    if isinstance(phase, LookAt) and phase.object in box_by_label:
        params = gz.gen_params_for(phase.object)
        return gz.sample_gaze_pixel(rng, phase.cls, params,
                                    box_by_label[phase.object], t)
    # looking away (or target not visible): uniform, preferring box-free spots
    for _ in range(20):
        x = rng.uniform(0.0, cam.image_width)
        y = rng.uniform(0.0, cam.image_height)
        if not any(b.contains(x, y) for b in box_by_label.values()):
            return gz.GazeSample(t, x, y)
    return gz.GazeSample(t, x, y)


def _estimate_obstacles(scenario: Scenario, dyn_now, prev_dyn,
                        dt: float) -> list[nav.ObstacleEstimate]:
    ests = []
    for i, (o, p) in enumerate(zip(scenario.dynamic_obstacles, dyn_now)):
        if prev_dyn is None:
            vx = vy = 0.0
        else:
            vx = (p[0] - prev_dyn[i][0]) / dt
            vy = (p[1] - prev_dyn[i][1]) / dt
        ests.append(nav.ObstacleEstimate(p[0], p[1], vx, vy, o.radius))
    return ests


def _corridor_blocked(path: nav.PlannedPath, dyn_now, scenario: Scenario,
                      t: float) -> bool:
    for o, p in zip(scenario.dynamic_obstacles, dyn_now):
        if nav.path_min_distance(path, p) < scenario.robot_radius + o.radius:
            return True
    return False


def _static_on_corridor(grid: OccupancyGrid, path: nav.PlannedPath,
                        robot_radius: float, corridor: float = 0.5) -> bool:
    """Any truly occupied cell close to the planned corridor?"""
    occ = grid.occupied_cells()
    limit = robot_radius + corridor
    for ix, iy in occ:
        c = grid.world_of(int(ix), int(iy))
        if nav.path_min_distance(path, c) < limit:
            return True
    return False


# --- replay -----------------------------------------------------------------

def replay_metrics(events: Sequence[dict]) -> RunMetrics:
    """Re-derive RunMetrics from an event log alone.

    Collisions are recomputed from logged poses against the scenario geometry
    (carried in the run record), not read back from per-tick flags.
    """
    run = next(e for e in events if e.get("type") == "run")
    scenario = scenario_from_dict(run["scenario"])
    script = script_from_dict(run["script"])
    cfg = run["cfg"]
    m = RunMetrics()
    in_static = False
    in_dyn = [False] * len(scenario.dynamic_obstacles)
    in_emg = False
    dispatch_t = None
    for e in events:
        if e.get("type") != "tick":
            continue
        t = e["t"]
        x, y, _ = e["pose"]
        m.sim_time = t + cfg["tick_dt"]
        if e["dispatch"] is not None:
            m.goal_dispatched = True
            m.dispatched_object = e["dispatch"]["object"]
            m.dispatch_time = e["dispatch"]["t"]
            dispatch_t = m.dispatch_time
            m.goal_correct = (script.intended_target() == m.dispatched_object)
        if m.intent_latency is None and e["vote"] == int(gz.TaskClass.INTERACTIVE):
            ph = script.phase_at(t)
            if isinstance(ph, LookAt) and ph.cls == gz.TaskClass.INTERACTIVE:
                m.intent_latency = t - ph.t
        if e["emergency"] and not in_emg:
            m.emergency_stops += 1
        in_emg = e["emergency"]
        sc = static_contact(scenario.grid, x, y, scenario.robot_radius)
        if sc and not in_static:
            m.static_collisions += 1
        in_static = sc
        for i, (o, p) in enumerate(zip(scenario.dynamic_obstacles, e["dyn"])):
            dc = math.hypot(x - p[0], y - p[1]) < scenario.robot_radius + o.radius
            if dc and not in_dyn[i]:
                m.dynamic_collisions += 1
            in_dyn[i] = dc
        if dispatch_t is not None and not m.reached:
            goal = scenario.object_by_label(m.dispatched_object).goal_point
            if math.hypot(x - goal[0], y - goal[1]) <= cfg["r_goal"]:
                m.reached = True
                m.time_to_goal = (t + cfg["tick_dt"]) - dispatch_t
                m.stop_distance = math.hypot(x - goal[0], y - goal[1])
    if m.goal_dispatched:
        stored = next((e for e in events if e.get("type") == "metrics"), None)
        if stored is not None:
            m.static_exposed = stored["static_exposed"]
    m.dynamic_exposed = len(scenario.dynamic_obstacles) > 0
    return m


# --- batches ----------------------------------------------------------------

@dataclass(frozen=True)
class BatchCase:
    family: str
    scenario: Scenario
    script: GazeScript
    seed: int


def _mean_se(values: list) -> dict:
    values = [v for v in values if v is not None]
    n = len(values)
    if n == 0:
        return {"n": 0, "mean": None, "se": None}
    mean = float(np.mean(values))
    se = 0.0 if n < 2 else float(np.std(values, ddof=1) / math.sqrt(n))
    return {"n": n, "mean": mean, "se": se}


@dataclass
class AggregateReport:
    n_runs: int
    families: dict
    overall: dict

    def to_dict(self) -> dict:
        return {"n_runs": self.n_runs, "families": self.families,
                "overall": self.overall}


def summarize_runs(metrics: list[tuple[str, RunMetrics]]) -> AggregateReport:
    """Aggregate per-run metrics into mean +/- standard error per family."""
    if len(metrics) < 2:
        raise ValueError("need at least 2 runs to aggregate")
    families = sorted({fam for fam, _ in metrics})
    out_f = {}
    for fam in families + ["__all__"]:
        ms = [m for f, m in metrics if fam == "__all__" or f == fam]
        stat = {
            "runs": len(ms),
            "time_to_goal": _mean_se([m.time_to_goal for m in ms if m.reached]),
            "stop_distance": _mean_se([m.stop_distance for m in ms if m.reached]),
            "static_collisions": _mean_se([float(m.static_collisions) for m in ms]),
            "dynamic_collisions": _mean_se([float(m.dynamic_collisions) for m in ms]),
            "emergency_stops": _mean_se([float(m.emergency_stops) for m in ms]),
            "intent_latency": _mean_se([m.intent_latency for m in ms
                                        if m.intent_latency is not None]),
            "reached_rate": (sum(m.reached for m in ms) / len(ms)),
            "dispatch_rate": (sum(m.goal_dispatched for m in ms) / len(ms)),
            "collision_free_rate": (sum((m.static_collisions == 0
                                         and m.dynamic_collisions == 0)
                                        for m in ms) / len(ms)),
        }
        st_exp = [m for m in ms if m.static_exposed]
        dy_exp = [m for m in ms if m.dynamic_exposed]
        stat["static_avoidance_rate"] = (
            None if not st_exp
            else 1.0 - sum(m.static_collisions > 0 for m in st_exp) / len(st_exp))
        stat["dynamic_avoidance_rate"] = (
            None if not dy_exp
            else 1.0 - sum(m.dynamic_collisions > 0 for m in dy_exp) / len(dy_exp))
        if fam == "__all__":
            overall = stat
        else:
            out_f[fam] = stat
    return AggregateReport(n_runs=len(metrics), families=out_f, overall=overall)


def run_batch(cases: Sequence[BatchCase], models: dict[str, Model],
              cfg: SimConfig | None = None,
              ) -> tuple[AggregateReport, list[tuple[str, RunMetrics]]]:
    results = []
    for case in cases:
        m, _ = run_scenario(case.scenario, case.script, models, cfg,
                            seed=case.seed)
        results.append((case.family, m))
    return summarize_runs(results), results


# --- decoder-only evaluation ---------------------------------------------------

def intent_accuracy_eval(scenario: Scenario, models: dict[str, Model],
                         n_trials: int, seed: int,
                         gen_params: dict[str, gz.GazeGenParams] | None = None,
                         cfg: SimConfig | None = None) -> dict:
    """Per-object, per-class decoding accuracy of the full per-frame pipeline.

    For each (object, class), fresh synthetic traces are pushed through
    projection, hit-test, normalization, classification and the ring buffer;
    a trial is correct when the first full-buffer vote matches the scripted
    class.  Returns mean and standard error per (object, class).
    """
    cfg = cfg or SimConfig()
    pose = scenario.start_pose
    boxes = project_objects(scenario.camera, pose, scenario.objects)
    box_by_label = dict(boxes)
    out: dict[str, dict[str, dict]] = {}
    for oi, obj in enumerate(scenario.objects):
        label = obj.label
        if label not in models or label not in box_by_label:
            continue
        params = gz.gen_params_for(label, gen_params)
        per_class = {}
        for cls in (gz.TaskClass.NON_INTERACTIVE, gz.TaskClass.INTERACTIVE):
            correct = []
            for trial in range(n_trials):
                rng = np.random.default_rng([seed, oi, int(cls), trial])
                buf = it.IntentBuffer(capacity=cfg.buffer_capacity)
                avg = gz.AveragedBox(label, box_by_label[label])
                ok = False
                for k in range(cfg.buffer_capacity * 3):
                    sample = gz.sample_gaze_pixel(rng, cls, params,
                                                  box_by_label[label], k * cfg.tick_dt)
                    hit = gz.hit_test(sample, boxes)
                    c = None
                    if hit == label:
                        uv = gz.normalize_gaze(sample, avg, cfg.margin_frac)
                        if uv is not None:
                            c, _ = models[label].predict((uv.u, uv.v))
                    it.push_frame(buf, hit, c)
                    if buf.full and buf.current_object == label:
                        ok = it.vote(buf) == cls
                        break
                correct.append(float(ok))
            per_class["interactive" if cls else "non_interactive"] = \
                _mean_se(correct)
        out[label] = per_class
    return out
