"""Navigation: global planning with Dijkstra over the inflated occupancy grid
and local control with the dynamic window approach (DWA), including dynamic
obstacle avoidance and emergency stop.

Path costs are in cell steps (1 straight, sqrt(2) diagonal).  The DWA treats
every non-Free cell as blocked and measures clearances to blocked cell
centers; dynamic obstacles are predicted with constant velocity over the
rollout horizon.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .world import OccupancyGrid, Pose, VelocityCommand, wrap_angle

SQRT2 = math.sqrt(2.0)

_NEIGHBORS = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
              (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]

GOAL_STANDOFF = 0.5
DEFAULT_R_GOAL = 0.25


@dataclass(frozen=True)
class PlannedPath:
    """8-connected grid path; waypoints are world coordinates of cell centers."""
    waypoints: tuple[tuple[float, float], ...]
    total_cost: float

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def goal(self) -> tuple[float, float]:
        return self.waypoints[-1]


def nearest_free_cell(grid: OccupancyGrid, point: tuple[float, float],
                      max_dist: float = GOAL_STANDOFF) -> Optional[tuple[int, int]]:
    """Free cell whose center is nearest to ``point`` within ``max_dist``.

    Ties break on the smaller cell index (ix, iy).  Returns None when no free
    cell is close enough.
    """
    px, py = point
    r_cells = int(math.ceil(max_dist / grid.resolution)) + 1
    cx, cy = grid.cell_of(px, py)
    best: tuple[float, int, int] | None = None
    for ix in range(max(0, cx - r_cells), min(grid.width_cells, cx + r_cells + 1)):
        for iy in range(max(0, cy - r_cells), min(grid.height_cells, cy + r_cells + 1)):
            if grid.cells[ix, iy] != 0:
                continue
            wx, wy = grid.world_of(ix, iy)
            d = math.hypot(wx - px, wy - py)
            if d <= max_dist:
                key = (d, ix, iy)
                if best is None or key < best:
                    best = key
    return None if best is None else (best[1], best[2])


def plan_dijkstra(grid: OccupancyGrid, start: Pose,
                  goal: tuple[float, float]) -> Optional[PlannedPath]:
    """Minimum-cost 8-connected path on the inflated grid.

    The goal cell is retargeted to the nearest free cell within the goal
    standoff when it is blocked or out of bounds.  Returns None when no path
    exists; raises when the start cell itself is not free.
    """
    sx, sy = grid.cell_of(start.x, start.y)
    if not grid.is_free(sx, sy):
        raise ValueError("start cell is not free")
    gx, gy = grid.cell_of(*goal)
    if not grid.is_free(gx, gy):
        retarget = nearest_free_cell(grid, goal)
        if retarget is None:
            return None
        gx, gy = retarget
    h = grid.height_cells
    start_idx = sx * h + sy
    goal_idx = gx * h + gy
    free = grid.cells == 0
    dist: dict[int, float] = {start_idx: 0.0}
    parent: dict[int, int] = {}
    heap: list[tuple[float, int]] = [(0.0, start_idx)]
    settled = set()
    while heap:
        d, idx = heapq.heappop(heap)
        if idx in settled:
            continue
        settled.add(idx)
        if idx == goal_idx:
            break
        ix, iy = divmod(idx, h)
        for dx, dy, c in _NEIGHBORS:
            nx, ny = ix + dx, iy + dy
            if not (0 <= nx < grid.width_cells and 0 <= ny < h):
                continue
            if not free[nx, ny]:
                continue
            nidx = nx * h + ny
            nd = d + c
            if nd < dist.get(nidx, math.inf):
                dist[nidx] = nd
                parent[nidx] = idx
                heapq.heappush(heap, (nd, nidx))
    if goal_idx not in settled:
        return None
    cells = [goal_idx]
    while cells[-1] != start_idx:
        cells.append(parent[cells[-1]])
    cells.reverse()
    waypoints = tuple(grid.world_of(*divmod(i, h)) for i in cells)
    return PlannedPath(waypoints=waypoints, total_cost=dist[goal_idx])


def path_min_distance(path: PlannedPath, point: tuple[float, float]) -> float:
    """Distance from a point to the path polyline."""
    px, py = point
    pts = path.waypoints
    if len(pts) == 1:
        return math.hypot(pts[0][0] - px, pts[0][1] - py)
    best = math.inf
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        vx, vy = bx - ax, by - ay
        L2 = vx * vx + vy * vy
        if L2 == 0:
            t = 0.0
        else:
            t = min(max(((px - ax) * vx + (py - ay) * vy) / L2, 0.0), 1.0)
        best = min(best, math.hypot(ax + t * vx - px, ay + t * vy - py))
    return best


def carrot_waypoint(path: PlannedPath, pose: Pose,
                    lookahead: float) -> tuple[float, float]:
    """First path point at arc length >= lookahead beyond the point of the
    path nearest to the pose; the final waypoint when the path is shorter."""
    pts = path.waypoints
    dists = [math.hypot(p[0] - pose.x, p[1] - pose.y) for p in pts]
    nearest = min(range(len(pts)), key=lambda i: (dists[i], i))
    if lookahead <= 0.0:
        return pts[nearest]
    arc = 0.0
    for j in range(nearest + 1, len(pts)):
        arc += math.hypot(pts[j][0] - pts[j - 1][0], pts[j][1] - pts[j - 1][1])
        if arc >= lookahead:
            return pts[j]
    return pts[-1]


def goal_reached(pose: Pose, goal: tuple[float, float],
                 r_goal: float = DEFAULT_R_GOAL) -> bool:
    """True inside the closed ball of radius r_goal around the goal."""
    if r_goal <= 0:
        raise ValueError("r_goal must be positive")
    return math.hypot(pose.x - goal[0], pose.y - goal[1]) <= r_goal


class ObstacleEstimate(NamedTuple):
    """Planner-side view of a dynamic obstacle: position, velocity, radius."""
    x: float
    y: float
    vx: float
    vy: float
    radius: float


@dataclass(frozen=True)
class DwaConfig:
    v_max: float = 1.0
    omega_max: float = 1.5
    a_v: float = 0.5
    a_omega: float = 2.0
    horizon: float = 2.0
    sim_dt: float = 0.1
    n_v: int = 11
    n_omega: int = 21
    w_heading: float = 0.6
    w_clearance: float = 0.2
    w_velocity: float = 0.2
    # the clearance score slope is 2*w_clearance/clearance_cap per unit v, so
    # the cap must exceed 2*w_clearance/w_velocity (2 m at default weights) or
    # the controller parks at the ring where moving starts costing clearance
    clearance_cap: float = 3.0
    # must exceed the half-diagonal of a grid cell: admissibility measures to
    # blocked cell centers, collisions are against cell squares
    safety_radius: float = 0.1
    robot_radius: float = 0.3
    tick_dt: float = 0.04
    # minimum carrot distance; the effective lookahead is
    # max(lookahead, horizon * window_v_max): short when slow so the carrot
    # tracks the planned detour around obstacles, long when fast so cruise
    # arcs cannot overshoot the carrot in open space
    lookahead: float = 0.8
    # extra admissibility standoff against dynamic obstacles only: the chair
    # cannot reverse, so it must come to rest outside a pedestrian's swept
    # lane, not on its edge
    dyn_margin: float = 0.3
    # stopping safety: the arc endpoint (where the chair would come to rest)
    # must stay clear of predicted obstacle motion for this long, so the
    # controller never commits into a lane it would be trapped in
    dyn_horizon: float = 5.0

    def __post_init__(self):
        if self.n_v < 2 or self.n_omega < 2:
            raise ValueError("n_v and n_omega must be >= 2")
        for name in ("v_max", "omega_max", "a_v", "a_omega", "horizon",
                     "sim_dt", "clearance_cap", "safety_radius",
                     "robot_radius", "tick_dt", "lookahead"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class DwaDiagnostics:
    emergency_stop: bool
    admissible_count: int
    n_candidates: int
    window: tuple[float, float, float, float]  # v_lo, v_hi, omega_lo, omega_hi
    carrot: tuple[float, float]
    chosen_clearance: float  # min clearance of the chosen arc (inf when free)
    chosen_score: float


def rollout_arc(pose: Pose, v: float, omega: float, steps: int,
                sim_dt: float) -> np.ndarray:
    """Euler forward simulation; rows are (x, y, theta) after 1..steps steps."""
    out = np.empty((steps, 3))
    x, y, th = pose.x, pose.y, pose.theta
    for k in range(steps):
        x += v * math.cos(th) * sim_dt
        y += v * math.sin(th) * sim_dt
        th = wrap_angle(th + omega * sim_dt)
        out[k] = (x, y, th)
    return out


def blocked_kdtree(grid: OccupancyGrid) -> Optional[cKDTree]:
    """KD-tree over blocked (Occupied or Inflated) cell centers."""
    centers = grid.blocked_centers()
    if len(centers) == 0:
        return None
    return cKDTree(centers)


def dwa_step(pose: Pose, current: VelocityCommand, grid: OccupancyGrid,
             dyn_obs: Sequence[ObstacleEstimate], path: PlannedPath,
             cfg: DwaConfig,
             blocked_tree: Optional[cKDTree] = None) -> tuple[VelocityCommand, DwaDiagnostics]:
    """One DWA control step.

    Samples the reachable (v, omega) window on an n_v x n_omega grid, rolls
    each candidate out for the horizon, drops candidates that come within
    robot_radius + safety_radius of any blocked cell center or predicted
    obstacle disc, and scores the rest by heading, clearance and speed.
    Returns (0, 0) flagged as emergency stop when nothing is admissible.
    """
    if len(path) == 0:
        raise ValueError("path must be non-empty")
    if blocked_tree is None:
        blocked_tree = blocked_kdtree(grid)
    v_lo = max(0.0, current.v - cfg.a_v * cfg.tick_dt)
    v_hi = min(cfg.v_max, current.v + cfg.a_v * cfg.tick_dt)
    w_lo = max(-cfg.omega_max, current.omega - cfg.a_omega * cfg.tick_dt)
    w_hi = min(cfg.omega_max, current.omega + cfg.a_omega * cfg.tick_dt)
    vs = np.linspace(v_lo, v_hi, cfg.n_v)
    ws = np.linspace(w_lo, w_hi, cfg.n_omega)
    steps = max(1, int(round(cfg.horizon / cfg.sim_dt)))
    carrot = carrot_waypoint(path, pose,
                             max(cfg.lookahead, cfg.horizon * v_hi))
    margin = cfg.robot_radius + cfg.safety_radius

    n_cand = cfg.n_v * cfg.n_omega
    cand_v = np.repeat(vs, cfg.n_omega)
    cand_w = np.tile(ws, cfg.n_v)

    # vectorized Euler rollout of all candidates at once
    xs = np.empty((steps, n_cand))
    ys = np.empty((steps, n_cand))
    ths = np.empty((steps, n_cand))
    x = np.full(n_cand, pose.x)
    y = np.full(n_cand, pose.y)
    th = np.full(n_cand, pose.theta)
    for k in range(steps):
        x = x + cand_v * np.cos(th) * cfg.sim_dt
        y = y + cand_v * np.sin(th) * cfg.sim_dt
        th = th + cand_w * cfg.sim_dt
        xs[k], ys[k], ths[k] = x, y, th

    clear_static = np.full((steps, n_cand), np.inf)
    if blocked_tree is not None:
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
        d, _ = blocked_tree.query(pts)
        clear_static = d.reshape(steps, n_cand)
    clear_dyn = np.full((steps, n_cand), np.inf)
    rest_dyn = np.full(n_cand, np.inf)
    for ob in dyn_obs:
        ts = (np.arange(1, steps + 1) * cfg.sim_dt)[:, None]
        ox = ob.x + ob.vx * ts
        oy = ob.y + ob.vy * ts
        d = np.hypot(xs - ox, ys - oy) - ob.radius
        clear_dyn = np.minimum(clear_dyn, d)
        # stopping safety: distance from each arc's rest position to the
        # obstacle's predicted track over (horizon, dyn_horizon]
        if cfg.dyn_horizon > cfg.horizon:
            t0, t1 = steps * cfg.sim_dt, cfg.dyn_horizon
            ax, ay = ob.x + ob.vx * t0, ob.y + ob.vy * t0
            bx, by = ob.x + ob.vx * t1, ob.y + ob.vy * t1
            d_rest = _point_segment_distance(xs[-1], ys[-1], ax, ay, bx, by)
            rest_dyn = np.minimum(rest_dyn, d_rest - ob.radius)

    min_static = clear_static.min(axis=0)
    min_dyn = np.minimum(clear_dyn.min(axis=0), rest_dyn)
    min_clear = np.minimum(min_static, clear_dyn.min(axis=0))
    admissible = (min_static > margin) & (min_dyn > margin + cfg.dyn_margin)
    n_adm = int(admissible.sum())
    window = (v_lo, v_hi, w_lo, w_hi)
    if n_adm == 0:
        diag = DwaDiagnostics(emergency_stop=True, admissible_count=0,
                              n_candidates=n_cand, window=window,
                              carrot=carrot, chosen_clearance=0.0,
                              chosen_score=-math.inf)
        return VelocityCommand(0.0, 0.0), diag

    end_th = wrap_angles(ths[-1])
    to_carrot = np.arctan2(carrot[1] - ys[-1], carrot[0] - xs[-1])
    at_carrot = np.hypot(carrot[0] - xs[-1], carrot[1] - ys[-1]) < 1e-9
    ang = np.abs(wrap_angles(to_carrot - end_th))
    ang[at_carrot] = 0.0
    heading = 1.0 - ang / math.pi
    gap = np.clip(min_clear - cfg.robot_radius, 0.0, cfg.clearance_cap)
    clearance_score = gap / cfg.clearance_cap
    velocity_score = cand_v / cfg.v_max if cfg.v_max > 0 else np.zeros(n_cand)
    score = (cfg.w_heading * heading + cfg.w_clearance * clearance_score
             + cfg.w_velocity * velocity_score)
    score[~admissible] = -np.inf
    best = int(np.argmax(score))
    diag = DwaDiagnostics(emergency_stop=False, admissible_count=n_adm,
                          n_candidates=n_cand, window=window, carrot=carrot,
                          chosen_clearance=float(min_clear[best]),
                          chosen_score=float(score[best]))
    return VelocityCommand(float(cand_v[best]), float(cand_w[best])), diag


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    w = np.remainder(a + math.pi, 2.0 * math.pi) - math.pi
    w[w == -math.pi] = math.pi
    return w


def _point_segment_distance(px, py, ax, ay, bx, by):
    """Distance from points (px, py) to the segment (ax, ay)-(bx, by)."""
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / L2, 0.0, 1.0)
    return np.hypot(ax + t * vx - px, ay + t * vy - py)
