"""The standard scenario pack: four room layouts (empty, cluttered with
static pillars, crossing pedestrian, nested object boxes) with matching gaze
scripts, used by the benchmark command and the acceptance suite.

All rooms are 10 m x 10 m at 0.1 m resolution with walled borders.  The same
three target objects (tv, laptop, chair) appear in every family so one set of
trained models drives the whole pack.
"""
from __future__ import annotations

import math

from .gaze import TaskClass
from .sim import BatchCase, GazeScript, LookAt, LookAway, Wink
from .world import (CameraModel, DynamicObstacle, OccupancyGrid, Pose,
                    Scenario, SceneObject)

ROOM_SIZE = 10.0
RESOLUTION = 0.1
FAMILIES = ("empty-room", "cluttered-static", "crossing-pedestrian",
            "nested-objects")


def _walled_room() -> OccupancyGrid:
    n = int(round(ROOM_SIZE / RESOLUTION))
    grid = OccupancyGrid(n, n, RESOLUTION)
    grid.cells[0, :] = 1
    grid.cells[-1, :] = 1
    grid.cells[:, 0] = 1
    grid.cells[:, -1] = 1
    return grid


def _stamp_rect(grid: OccupancyGrid, x0: float, y0: float, x1: float, y1: float) -> None:
    """Occupy every cell overlapping the rectangle."""
    res = grid.resolution
    ix0 = max(0, int(math.floor(x0 / res)))
    iy0 = max(0, int(math.floor(y0 / res)))
    ix1 = min(grid.width_cells - 1, int(math.ceil(x1 / res) - 1))
    iy1 = min(grid.height_cells - 1, int(math.ceil(y1 / res) - 1))
    grid.cells[ix0:ix1 + 1, iy0:iy1 + 1] = 1


def _stamp_object(grid: OccupancyGrid, obj: SceneObject) -> None:
    cx, cy, _ = obj.center_3d
    hx, hy = obj.extent_3d[0] / 2.0, obj.extent_3d[1] / 2.0
    _stamp_rect(grid, cx - hx, cy - hy, cx + hx, cy + hy)


def _standard_objects() -> list[SceneObject]:
    return [
        SceneObject("tv", center_3d=(8.85, 6.5, 1.5), extent_3d=(0.25, 1.4, 0.8),
                    goal_point=(7.65, 6.5)),
        SceneObject("laptop", center_3d=(8.75, 5.0, 1.0), extent_3d=(0.45, 0.5, 0.35),
                    goal_point=(7.45, 5.0)),
        SceneObject("chair", center_3d=(8.6, 3.3, 0.5), extent_3d=(0.6, 0.6, 1.0),
                    goal_point=(7.25, 3.3)),
    ]


def _base_scenario(seed: int, start_y: float = 5.0) -> tuple[OccupancyGrid, list[SceneObject], Pose]:
    grid = _walled_room()
    objects = _standard_objects()
    for o in objects:
        _stamp_object(grid, o)
    start = Pose(2.0, start_y, 0.0)
    return grid, objects, start


def empty_room(seed: int = 0) -> Scenario:
    grid, objects, start = _base_scenario(seed)
    return Scenario(grid=grid, objects=objects, dynamic_obstacles=[],
                    start_pose=start, camera=CameraModel(),
                    robot_radius=0.3, rng_seed=seed)


_PILLARS = [(4.0, 3.2), (4.3, 6.6), (5.8, 4.9), (6.6, 2.6), (6.4, 7.2),
            (3.6, 5.0)]


def cluttered_static(seed: int = 0) -> Scenario:
    """Six 0.4 m square pillars between the start and the target wall."""
    start_y = 5.0 + 0.08 * (seed % 5) - 0.16
    grid, objects, start = _base_scenario(seed, start_y=start_y)
    for px, py in _PILLARS:
        _stamp_rect(grid, px - 0.2, py - 0.2, px + 0.2, py + 0.2)
    return Scenario(grid=grid, objects=objects, dynamic_obstacles=[],
                    start_pose=start, camera=CameraModel(),
                    robot_radius=0.3, rng_seed=seed)


def crossing_pedestrian(seed: int = 0, n_pedestrians: int = 2) -> Scenario:
    """One pedestrian shuttles across the robot's corridor (phase varies with
    the seed); a second wanders a loop away from the route.  Two full-height
    crossing lanes this close together would leave no admissible waiting
    pocket at all for a chair that cannot reverse."""
    start_y = 5.0 + 0.08 * (seed % 5) - 0.16
    grid, objects, start = _base_scenario(seed, start_y=start_y)
    dyn = [DynamicObstacle(radius=0.25,
                           waypoints=((5.2, 1.2), (5.2, 8.8)),
                           speed=0.5, phase=3.1 * seed % 30.4)]
    if n_pedestrians >= 2:
        dyn.append(DynamicObstacle(radius=0.25,
                                   waypoints=((1.5, 6.8), (3.4, 6.8),
                                              (3.4, 8.4), (1.5, 8.4)),
                                   speed=0.3, phase=(2.3 * seed + 7.0) % 23.4))
    return Scenario(grid=grid, objects=objects, dynamic_obstacles=dyn,
                    start_pose=start, camera=CameraModel(),
                    robot_radius=0.3, rng_seed=seed)


def nested_objects(seed: int = 0) -> Scenario:
    """A laptop on a stand in front of a media wall: from the start pose the
    laptop's image box nests strictly inside the tv's box, exercising the
    smallest-area hit-test rule."""
    grid = _walled_room()
    objects = [
        SceneObject("tv", center_3d=(9.0, 5.0, 1.3), extent_3d=(0.25, 3.0, 2.2),
                    goal_point=(7.8, 6.9)),
        SceneObject("laptop", center_3d=(5.5, 5.0, 1.175),
                    extent_3d=(0.45, 0.5, 0.35), goal_point=(4.2, 5.0)),
        SceneObject("chair", center_3d=(8.6, 2.5, 0.5), extent_3d=(0.6, 0.6, 1.0),
                    goal_point=(7.25, 2.5)),
    ]
    for o in objects:
        _stamp_object(grid, o)
    return Scenario(grid=grid, objects=objects, dynamic_obstacles=[],
                    start_pose=Pose(2.0, 5.0, 0.0), camera=CameraModel(),
                    robot_radius=0.3, rng_seed=seed)


_BUILDERS = {
    "empty-room": empty_room,
    "cluttered-static": cluttered_static,
    "crossing-pedestrian": crossing_pedestrian,
    "nested-objects": nested_objects,
}

_TARGETS = {
    "empty-room": "chair",
    "cluttered-static": "chair",
    "crossing-pedestrian": "chair",
    "nested-objects": "laptop",
}


def build_scenario(family: str, seed: int = 0) -> Scenario:
    if family not in _BUILDERS:
        raise ValueError(f"unknown scenario family {family!r}; "
                         f"choose from {sorted(_BUILDERS)}")
    return _BUILDERS[family](seed)


def target_object(family: str) -> str:
    return _TARGETS[family]


def interactive_script(obj: str, look_t: float = 0.5,
                       wink_t: float = 3.2) -> GazeScript:
    """Look away, then an interactive look at the target, confirmed by a wink."""
    return GazeScript((LookAway(0.0),
                       LookAt(look_t, obj, TaskClass.INTERACTIVE),
                       Wink(wink_t)))


def noninteractive_script(obj: str, look_t: float = 0.5) -> GazeScript:
    """Merely look at the object; never wink.  The chair must not move."""
    return GazeScript((LookAway(0.0),
                       LookAt(look_t, obj, TaskClass.NON_INTERACTIVE)))


def standard_cases(seeds=range(20)) -> list[BatchCase]:
    """The benchmark pack: every family with interactive scripts, one run per seed."""
    cases = []
    for family in FAMILIES:
        obj = target_object(family)
        for seed in seeds:
            cases.append(BatchCase(family=family,
                                   scenario=build_scenario(family, seed),
                                   script=interactive_script(obj),
                                   seed=seed))
    return cases


def negative_cases(seeds=range(20)) -> list[BatchCase]:
    """No-wink control runs over the same scenario families."""
    cases = []
    for family in FAMILIES:
        obj = target_object(family)
        for seed in seeds:
            cases.append(BatchCase(family=f"{family}/no-wink",
                                   scenario=build_scenario(family, seed),
                                   script=noninteractive_script(obj),
                                   seed=seed))
    return cases


def export_pack(out_dir) -> list[str]:
    """Write each family's seed-0 scenario and scripts as JSON files."""
    import json
    from pathlib import Path

    from .world import save_scenario

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for family in FAMILIES:
        path = out / f"{family}.json"
        save_scenario(build_scenario(family, 0), path)
        written.append(str(path))
        spath = out / f"{family}.script.json"
        with open(spath, "w") as f:
            json.dump(interactive_script(target_object(family)).to_dict(), f,
                      sort_keys=True, indent=1)
            f.write("\n")
        written.append(str(spath))
    return written


if __name__ == "__main__":
    import sys
    for p in export_pack(sys.argv[1] if len(sys.argv) > 1 else "scenarios"):
        print(p)

