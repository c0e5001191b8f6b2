"""World model: occupancy grid, scene objects, wheelchair kinematics and the
simulated ego camera that turns 3D objects into 2D bounding boxes.

Conventions used throughout the package:

* world frame: x/y in meters on the ground plane, z up, angles in radians,
  headings wrapped to (-pi, pi];
* grid frame: cell (ix, iy), cell (0, 0) covers world [0, res) x [0, res);
* image frame: pixels, origin top-left, v axis pointing down.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TAU = 2.0 * math.pi


class VelocityCommand(NamedTuple):
    """Linear (m/s, >= 0) and angular (rad/s) velocity sent to the drive."""
    v: float
    omega: float


STOP = VelocityCommand(0.0, 0.0)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, TAU)
    if w <= -math.pi:
        w += TAU
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


class CellState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    INFLATED = 2


class OccupancyGrid:
    """Tri-state grid (Free / Occupied / Inflated).

    ``cells`` has shape (width_cells, height_cells) and is indexed
    ``cells[ix, iy]``.
    """

    def __init__(self, width_cells: int, height_cells: int, resolution: float,
                 cells: np.ndarray | None = None):
        if width_cells <= 0 or height_cells <= 0:
            raise ValueError("grid dimensions must be positive")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.width_cells = int(width_cells)
        self.height_cells = int(height_cells)
        self.resolution = float(resolution)
        if cells is None:
            cells = np.zeros((width_cells, height_cells), dtype=np.uint8)
        cells = np.asarray(cells, dtype=np.uint8)
        if cells.shape != (width_cells, height_cells):
            raise ValueError("cells shape does not match grid dimensions")
        self.cells = cells

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.width_cells, self.height_cells,
                             self.resolution, self.cells.copy())

    # --- coordinate transforms -------------------------------------------
    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(x / self.resolution)),
                int(math.floor(y / self.resolution)))

    def world_of(self, ix: int, iy: int) -> tuple[float, float]:
        """Center of cell (ix, iy)."""
        return ((ix + 0.5) * self.resolution, (iy + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width_cells and 0 <= iy < self.height_cells

    def state_at(self, ix: int, iy: int) -> CellState:
        return CellState(int(self.cells[ix, iy]))

    def is_free(self, ix: int, iy: int) -> bool:
        return self.in_bounds(ix, iy) and self.cells[ix, iy] == CellState.FREE

    def set_occupied(self, cells: Iterable[tuple[int, int]]) -> None:
        for ix, iy in cells:
            if not self.in_bounds(ix, iy):
                raise ValueError(f"occupied cell {(ix, iy)} out of bounds")
            self.cells[ix, iy] = CellState.OCCUPIED

    def occupied_cells(self) -> np.ndarray:
        return np.argwhere(self.cells == CellState.OCCUPIED)

    def blocked_mask(self) -> np.ndarray:
        """Boolean mask of non-traversable (Occupied or Inflated) cells."""
        return self.cells != CellState.FREE

    def blocked_centers(self) -> np.ndarray:
        """World coordinates of the centers of all blocked cells, shape (n, 2)."""
        idx = np.argwhere(self.blocked_mask())
        return (idx + 0.5) * self.resolution

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Mark as Inflated every free cell whose square intersects the disc of
    ``radius`` meters around any occupied cell center.

    A cell at offset (dx, dy) cells from an occupied cell is inflated when
    hypot(max(|dx|-0.5, 0), max(|dy|-0.5, 0)) * resolution <= radius, i.e. the
    nearest point of the cell square lies within the disc.  radius 0 is the
    identity.  Occupied cells are never cleared.
    """
    if radius < 0:
        raise ValueError("inflation radius must be >= 0")
    out = grid.copy()
    occ = grid.occupied_cells()
    if occ.size == 0 or radius == 0.0:
        return out
    r_cells = radius / grid.resolution
    reach = int(math.floor(r_cells + 0.5))
    offsets = []
    for dx in range(-reach, reach + 1):
        for dy in range(-reach, reach + 1):
            gap = math.hypot(max(abs(dx) - 0.5, 0.0), max(abs(dy) - 0.5, 0.0))
            if gap <= r_cells:
                offsets.append((dx, dy))
    stamp = np.zeros_like(out.cells, dtype=bool)
    w, h = grid.width_cells, grid.height_cells
    for dx, dy in offsets:
        xs = occ[:, 0] + dx
        ys = occ[:, 1] + dy
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        stamp[xs[ok], ys[ok]] = True
    newly = stamp & (out.cells == CellState.FREE)
    out.cells[newly] = CellState.INFLATED
    return out


@dataclass(frozen=True)
class SceneObject:
    """Labeled 3D box in the world with an associated navigable goal point."""
    label: str
    center_3d: tuple[float, float, float]
    extent_3d: tuple[float, float, float]
    goal_point: tuple[float, float]

    def __post_init__(self):
        if any(e <= 0 for e in self.extent_3d):
            raise ValueError(f"object {self.label!r} extents must be positive")

    def corners(self) -> np.ndarray:
        """The 8 corners of the axis-aligned box, shape (8, 3)."""
        cx, cy, cz = self.center_3d
        hx, hy, hz = (e / 2.0 for e in self.extent_3d)
        return np.array([[cx + sx * hx, cy + sy * hy, cz + sz * hz]
                         for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])


@dataclass(frozen=True)
class DynamicObstacle:
    """Disc obstacle moving at constant speed along a looped polyline."""
    radius: float
    waypoints: tuple[tuple[float, float], ...]
    speed: float
    phase: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("obstacle speed must be >= 0")
        if len(self.waypoints) < 2:
            raise ValueError("obstacle needs at least 2 waypoints")
        object.__setattr__(self, "waypoints",
                           tuple((float(x), float(y)) for x, y in self.waypoints))


def dynamic_obstacle_position(obs: DynamicObstacle, t: float) -> tuple[float, float]:
    """Deterministic position at time t: arc length speed*(t+phase) along the
    closed waypoint loop.  A degenerate loop returns its first waypoint."""
    pts = obs.waypoints
    segs = []
    total = 0.0
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        d = math.hypot(b[0] - a[0], b[1] - a[1])
        segs.append((a, b, d))
        total += d
    if total == 0.0 or obs.speed == 0.0:
        return pts[0]
    s = math.fmod(obs.speed * (t + obs.phase), total)
    if s < 0:
        s += total
    for a, b, d in segs:
        if s <= d:
            if d == 0.0:
                return a
            f = s / d
            return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
        s -= d
    return pts[0]


@dataclass(frozen=True)
class CameraModel:
    """Pinhole scene camera rigidly mounted on the wheelchair.

    ``pitch`` tilts the optical axis down from horizontal (positive = down).
    """
    image_width: int = 1280
    image_height: int = 960
    focal_px: float = 600.0
    mount_height: float = 1.2
    pitch: float = 0.0

    def __post_init__(self):
        if self.focal_px <= 0:
            raise ValueError("focal_px must be positive")


@dataclass(frozen=True)
class BBox2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("malformed bounding box")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


_Z_EPS = 1e-6


def project_point(camera: CameraModel, pose: Pose,
                  point: Sequence[float]) -> tuple[float, float] | None:
    """Project a world point through the camera at ``pose``.

    Returns image (u, v) in pixels, or None when the point is not strictly in
    front of the camera.  The returned pixel may lie outside image bounds.
    """
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    dz = point[2] - camera.mount_height
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    fwd = c * dx + s * dy
    left = -s * dx + c * dy
    up = dz
    cp, sp = math.cos(camera.pitch), math.sin(camera.pitch)
    z = cp * fwd - sp * up
    up_p = sp * fwd + cp * up
    if z <= _Z_EPS:
        return None
    u = camera.image_width / 2.0 + camera.focal_px * (-left) / z
    v = camera.image_height / 2.0 + camera.focal_px * (-up_p) / z
    return (u, v)


def project_objects(camera: CameraModel, pose: Pose,
                    objects: Sequence[SceneObject]) -> list[tuple[str, BBox2D]]:
    """2D bounding boxes of the objects' visible corners, clipped to the image.

    An object is reported when at least one of its box corners projects in
    front of the camera and the resulting box overlaps the image; objects
    fully behind the camera are omitted.
    """
    out: list[tuple[str, BBox2D]] = []
    for obj in objects:
        us, vs = [], []
        for corner in obj.corners():
            uv = project_point(camera, pose, corner)
            if uv is not None:
                us.append(uv[0])
                vs.append(uv[1])
        if not us:
            continue
        x_min = max(min(us), 0.0)
        x_max = min(max(us), float(camera.image_width))
        y_min = max(min(vs), 0.0)
        y_max = min(max(vs), float(camera.image_height))
        if x_min > x_max or y_min > y_max:
            continue
        out.append((obj.label, BBox2D(x_min, y_min, x_max, y_max)))
    return out


def step_kinematics(pose: Pose, cmd: VelocityCommand, dt: float) -> Pose:
    """Explicit-Euler unicycle step: the position update uses the old heading."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(pose.x + cmd.v * math.cos(pose.theta) * dt,
                pose.y + cmd.v * math.sin(pose.theta) * dt,
                wrap_angle(pose.theta + cmd.omega * dt))


@dataclass
class Scenario:
    grid: OccupancyGrid
    objects: list[SceneObject]
    dynamic_obstacles: list[DynamicObstacle]
    start_pose: Pose
    camera: CameraModel = field(default_factory=CameraModel)
    robot_radius: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        labels = [o.label for o in self.objects]
        if len(set(labels)) != len(labels):
            raise ValueError("object labels must be unique")
        sx, sy = self.grid.cell_of(self.start_pose.x, self.start_pose.y)
        if not self.grid.is_free(sx, sy):
            raise ValueError("start pose is not in free space")
        for o in self.objects:
            gx, gy = self.grid.cell_of(*o.goal_point)
            if not self.grid.is_free(gx, gy):
                raise ValueError(f"goal point of {o.label!r} is not in a free cell")

    def object_by_label(self, label: str) -> SceneObject:
        for o in self.objects:
            if o.label == label:
                return o
        raise KeyError(label)


class ScenarioFormatError(ValueError):
    """Raised for malformed or unknown-key scenario files."""


def _require_keys(d: dict, allowed: set[str], required: set[str], ctx: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioFormatError(f"unknown keys in {ctx}: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ScenarioFormatError(f"missing keys in {ctx}: {sorted(missing)}")


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioFormatError("scenario must be a JSON object")
    _require_keys(data, {"grid", "objects", "dynamic_obstacles", "start_pose",
                         "camera", "robot_radius", "rng_seed"},
                  {"grid", "objects", "start_pose"}, "scenario")
    g = data["grid"]
    _require_keys(g, {"width", "height", "resolution", "occupied"},
                  {"width", "height", "resolution"}, "grid")
    grid = OccupancyGrid(g["width"], g["height"], g["resolution"])
    try:
        grid.set_occupied((int(i), int(j)) for i, j in g.get("occupied", []))
    except (TypeError, ValueError) as e:
        raise ScenarioFormatError(f"bad occupied cell list: {e}") from None
    objects = []
    for od in data["objects"]:
        _require_keys(od, {"label", "center", "extent", "goal_point"},
                      {"label", "center", "extent", "goal_point"}, "object")
        objects.append(SceneObject(label=od["label"],
                                   center_3d=tuple(float(v) for v in od["center"]),
                                   extent_3d=tuple(float(v) for v in od["extent"]),
                                   goal_point=tuple(float(v) for v in od["goal_point"])))
    dyn = []
    for dd in data.get("dynamic_obstacles", []):
        _require_keys(dd, {"radius", "waypoints", "speed", "phase"},
                      {"radius", "waypoints", "speed"}, "dynamic_obstacle")
        dyn.append(DynamicObstacle(radius=float(dd["radius"]),
                                   waypoints=tuple(tuple(w) for w in dd["waypoints"]),
                                   speed=float(dd["speed"]),
                                   phase=float(dd.get("phase", 0.0))))
    sp = data["start_pose"]
    _require_keys(sp, {"x", "y", "theta"}, {"x", "y", "theta"}, "start_pose")
    pose = Pose(float(sp["x"]), float(sp["y"]), float(sp["theta"]))
    cam = CameraModel()
    if "camera" in data:
        cd = data["camera"]
        _require_keys(cd, {"image_width", "image_height", "focal_px",
                           "mount_height", "pitch"}, set(), "camera")
        cam = CameraModel(image_width=int(cd.get("image_width", cam.image_width)),
                          image_height=int(cd.get("image_height", cam.image_height)),
                          focal_px=float(cd.get("focal_px", cam.focal_px)),
                          mount_height=float(cd.get("mount_height", cam.mount_height)),
                          pitch=float(cd.get("pitch", cam.pitch)))
    try:
        return Scenario(grid=grid, objects=objects, dynamic_obstacles=dyn,
                        start_pose=pose, camera=cam,
                        robot_radius=float(data.get("robot_radius", 0.3)),
                        rng_seed=int(data.get("rng_seed", 0)))
    except ValueError as e:
        raise ScenarioFormatError(str(e)) from None


def scenario_to_dict(sc: Scenario) -> dict:
    occ = [[int(i), int(j)] for i, j in sc.grid.occupied_cells()]
    return {
        "grid": {"width": sc.grid.width_cells, "height": sc.grid.height_cells,
                 "resolution": sc.grid.resolution, "occupied": occ},
        "objects": [{"label": o.label, "center": list(o.center_3d),
                     "extent": list(o.extent_3d), "goal_point": list(o.goal_point)}
                    for o in sc.objects],
        "dynamic_obstacles": [{"radius": d.radius,
                               "waypoints": [list(w) for w in d.waypoints],
                               "speed": d.speed, "phase": d.phase}
                              for d in sc.dynamic_obstacles],
        "start_pose": {"x": sc.start_pose.x, "y": sc.start_pose.y,
                       "theta": sc.start_pose.theta},
        "camera": {"image_width": sc.camera.image_width,
                   "image_height": sc.camera.image_height,
                   "focal_px": sc.camera.focal_px,
                   "mount_height": sc.camera.mount_height,
                   "pitch": sc.camera.pitch},
        "robot_radius": sc.robot_radius,
        "rng_seed": sc.rng_seed,
    }


def load_scenario(path) -> Scenario:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioFormatError(f"invalid JSON: {e}") from None
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(sc), f, sort_keys=True, indent=1)
        f.write("\n")
