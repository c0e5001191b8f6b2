import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazenav.world import (BBox2D, CameraModel, DynamicObstacle, OccupancyGrid,
                           Pose, Scenario, SceneObject, VelocityCommand,
                           dynamic_obstacle_position, inflate, project_objects,
                           project_point, scenario_from_dict, scenario_to_dict,
                           step_kinematics, wrap_angle, CellState,
                           ScenarioFormatError)


# --- angle wrapping ---------------------------------------------------------

@given(st.floats(-1000, 1000))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi


def test_wrap_angle_boundaries():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0


# --- grid transforms ----------------------------------------------------------

def test_cell_world_roundtrip_exact():
    grid = OccupancyGrid(50, 40, 0.1)
    for ix in range(50):
        for iy in range(40):
            assert grid.cell_of(*grid.world_of(ix, iy)) == (ix, iy)


# --- inflation ----------------------------------------------------------------

def brute_force_inflate(grid: OccupancyGrid, radius: float) -> set[tuple[int, int]]:
    """All-pairs disc stamp: blocked set computed without any offset mask."""
    occ = [tuple(c) for c in grid.occupied_cells()]
    blocked = set(occ)
    r_cells = radius / grid.resolution
    for ix in range(grid.width_cells):
        for iy in range(grid.height_cells):
            for ox, oy in occ:
                gap = math.hypot(max(abs(ix - ox) - 0.5, 0.0),
                                 max(abs(iy - oy) - 0.5, 0.0))
                if gap <= r_cells:
                    blocked.add((ix, iy))
                    break
    return blocked


def test_inflate_radius_zero_is_identity():
    grid = OccupancyGrid(10, 10, 0.5)
    grid.set_occupied([(3, 3), (7, 2)])
    out = inflate(grid, 0.0)
    assert np.array_equal(out.cells, grid.cells)


def test_inflate_single_cell_one_cell_radius():
    grid = OccupancyGrid(9, 9, 0.5)
    grid.set_occupied([(4, 4)])
    out = inflate(grid, 0.5)  # one cell width
    inflated = {tuple(c) for c in np.argwhere(out.cells == CellState.INFLATED)}
    assert inflated == {(3, 3), (3, 4), (3, 5), (4, 3), (4, 5),
                        (5, 3), (5, 4), (5, 5)}
    assert out.cells[4, 4] == CellState.OCCUPIED


def test_inflate_matches_brute_force_disc_stamp():
    rng = np.random.default_rng(7)
    for _ in range(5):
        grid = OccupancyGrid(20, 20, 0.25)
        occ = rng.integers(0, 20, size=(12, 2))
        grid.set_occupied([tuple(map(int, c)) for c in occ])
        radius = 2 * grid.resolution
        out = inflate(grid, radius)
        got = {tuple(c) for c in np.argwhere(out.cells != CellState.FREE)}
        assert got == brute_force_inflate(grid, radius)


def test_inflate_monotone_in_radius():
    rng = np.random.default_rng(3)
    grid = OccupancyGrid(15, 15, 0.2)
    grid.set_occupied([tuple(map(int, c)) for c in rng.integers(0, 15, (8, 2))])
    prev = set()
    for r in (0.0, 0.2, 0.4, 0.61, 0.8):
        out = inflate(grid, r)
        cur = {tuple(c) for c in np.argwhere(out.cells != CellState.FREE)}
        assert prev <= cur
        prev = cur


def test_inflate_never_clears_occupied():
    grid = OccupancyGrid(5, 5, 1.0)
    grid.set_occupied([(2, 2)])
    out = inflate(grid, 3.0)
    assert out.cells[2, 2] == CellState.OCCUPIED


# --- camera projection ----------------------------------------------------------

def test_point_on_optical_axis_projects_to_center():
    cam = CameraModel()
    pose = Pose(1.0, 2.0, 0.7)
    d = 5.0
    p = (pose.x + d * math.cos(0.7), pose.y + d * math.sin(0.7), cam.mount_height)
    uv = project_point(cam, pose, p)
    assert uv == pytest.approx((cam.image_width / 2, cam.image_height / 2))


def test_object_on_axis_gives_centered_box():
    cam = CameraModel()
    pose = Pose(0, 0, 0)
    obj = SceneObject("x", center_3d=(6.0, 0.0, cam.mount_height),
                      extent_3d=(0.5, 0.5, 0.5), goal_point=(5, 0))
    [(label, box)] = project_objects(cam, pose, [obj])
    assert label == "x"
    assert box.center == pytest.approx((640.0, 480.0))


def test_object_behind_camera_is_omitted():
    cam = CameraModel()
    pose = Pose(0, 0, 0)
    obj = SceneObject("x", center_3d=(-4.0, 0.0, 1.0),
                      extent_3d=(1, 1, 1), goal_point=(1, 0))
    assert project_objects(cam, pose, [obj]) == []


def test_unit_cube_matches_hand_pinhole_computation():
    # camera at origin facing +x, f=600, center (640, 480), height 1.2;
    # cube center (4, 0.5, 0.7), so corners x in {3.5, 4.5}, y in {0, 1},
    # z in {0.2, 1.2}.  u = 640 - 600*y/x, v = 480 - 600*(z - 1.2)/x.
    cam = CameraModel(image_width=1280, image_height=960, focal_px=600.0,
                      mount_height=1.2, pitch=0.0)
    pose = Pose(0, 0, 0)
    obj = SceneObject("cube", center_3d=(4.0, 0.5, 0.7), extent_3d=(1, 1, 1),
                      goal_point=(3, 0))
    [(_, box)] = project_objects(cam, pose, [obj])
    us, vs = [], []
    for x in (3.5, 4.5):
        for y in (0.0, 1.0):
            for z in (0.2, 1.2):
                us.append(640.0 - 600.0 * y / x)
                vs.append(480.0 - 600.0 * (z - 1.2) / x)
    assert box.x_min == pytest.approx(min(us))
    assert box.x_max == pytest.approx(max(us))
    assert box.y_min == pytest.approx(min(vs))
    assert box.y_max == pytest.approx(max(vs))


def test_boxes_always_clipped_to_image():
    cam = CameraModel()
    rng = np.random.default_rng(5)
    pose = Pose(0, 0, 0)
    for _ in range(50):
        c = rng.uniform([-2, -8, -1], [12, 8, 3])
        obj = SceneObject("x", center_3d=tuple(c),
                          extent_3d=tuple(rng.uniform(0.2, 3.0, 3)),
                          goal_point=(1, 1))
        for _, box in project_objects(cam, pose, [obj]):
            assert 0 <= box.x_min <= box.x_max <= cam.image_width
            assert 0 <= box.y_min <= box.y_max <= cam.image_height


# --- kinematics -----------------------------------------------------------------

def test_straight_line_step():
    p = step_kinematics(Pose(0, 0, 0), VelocityCommand(1.0, 0.0), 1.0)
    assert (p.x, p.y, p.theta) == (1.0, 0.0, 0.0)


def test_pure_rotation_step():
    p = step_kinematics(Pose(0, 0, 0), VelocityCommand(0.0, math.pi / 2), 1.0)
    assert (p.x, p.y) == (0.0, 0.0)
    assert p.theta == pytest.approx(math.pi / 2)


def test_circle_closes_within_tolerance():
    # v=1, omega=1 is a circle of radius 1; after 2*pi seconds at dt=0.001 the
    # integrated pose must come back to within 0.01 m of the start.
    pose = Pose(0, 0, 0)
    cmd = VelocityCommand(1.0, 1.0)
    dt = 0.001
    for _ in range(int(round(2 * math.pi / dt))):
        pose = step_kinematics(pose, cmd, dt)
    assert math.hypot(pose.x, pose.y) < 0.01


def test_two_half_steps_equal_full_step_when_not_turning():
    # exact up to the one-ulp slack of non-associative float addition
    cases = [(0.3, -1.2, 0.5, 1.0, 0.04), (10.0, 4.0, -2.0, 0.7, 0.1),
             (-3.5, 2.25, 3.0, 1.5, 0.5), (0.0, 0.0, math.pi / 3, 0.25, 0.08)]
    for x, y, th, v, dt in cases:
        cmd = VelocityCommand(v, 0.0)
        full = step_kinematics(Pose(x, y, th), cmd, dt)
        half = step_kinematics(step_kinematics(Pose(x, y, th), cmd, dt / 2),
                               cmd, dt / 2)
        assert half.theta == full.theta
        assert abs(half.x - full.x) <= 2 * math.ulp(max(1.0, abs(full.x)))
        assert abs(half.y - full.y) <= 2 * math.ulp(max(1.0, abs(full.y)))


# --- dynamic obstacles ------------------------------------------------------------

def test_zero_speed_stays_at_first_waypoint():
    obs = DynamicObstacle(radius=0.2, waypoints=((1, 1), (5, 5)), speed=0.0,
                          phase=3.0)
    for t in (0.0, 1.0, 10.0):
        assert dynamic_obstacle_position(obs, t) == (1, 1)


def test_two_waypoint_midpoint():
    obs = DynamicObstacle(radius=0.2, waypoints=((0, 0), (10, 0)), speed=1.0)
    assert dynamic_obstacle_position(obs, 5.0) == pytest.approx((5.0, 0.0))


def test_triangle_loop_matches_polyline_walk_oracle():
    pts = [(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]
    obs = DynamicObstacle(radius=0.1, waypoints=tuple(pts), speed=0.9, phase=1.7)
    # oracle: piecewise-linear interpolation over cumulative arc length
    loop = pts + [pts[0]]
    seglen = [math.dist(a, b) for a, b in zip(loop, loop[1:])]
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    xs = np.array([p[0] for p in loop])
    ys = np.array([p[1] for p in loop])
    total = cum[-1]
    for t in np.linspace(0, 30, 400):
        s = math.fmod(obs.speed * (t + obs.phase), total)
        ox = np.interp(s, cum, xs)
        oy = np.interp(s, cum, ys)
        got = dynamic_obstacle_position(obs, float(t))
        assert got == pytest.approx((ox, oy), abs=1e-9)


def test_degenerate_loop_returns_point():
    obs = DynamicObstacle(radius=0.2, waypoints=((2, 2), (2, 2)), speed=1.0)
    assert dynamic_obstacle_position(obs, 12.3) == (2, 2)


# --- scenario files -----------------------------------------------------------------

def make_scenario() -> Scenario:
    grid = OccupancyGrid(20, 20, 0.5)
    grid.cells[0, :] = 1
    grid.cells[:, 0] = 1
    obj = SceneObject("tv", center_3d=(8.0, 5.0, 1.5), extent_3d=(0.3, 1.0, 0.6),
                      goal_point=(7.0, 5.0))
    dyn = DynamicObstacle(radius=0.3, waypoints=((3, 3), (3, 8)), speed=0.5)
    return Scenario(grid=grid, objects=[obj], dynamic_obstacles=[dyn],
                    start_pose=Pose(2.0, 2.0, 0.0), rng_seed=4)


def test_scenario_dict_roundtrip():
    sc = make_scenario()
    rt = scenario_from_dict(scenario_to_dict(sc))
    assert scenario_to_dict(rt) == scenario_to_dict(sc)


def test_scenario_rejects_unknown_keys():
    d = scenario_to_dict(make_scenario())
    d["surprise"] = 1
    with pytest.raises(ScenarioFormatError, match="surprise"):
        scenario_from_dict(d)
    d2 = scenario_to_dict(make_scenario())
    d2["grid"]["color"] = "red"
    with pytest.raises(ScenarioFormatError, match="color"):
        scenario_from_dict(d2)


def test_scenario_invariants_enforced():
    sc = make_scenario()
    d = scenario_to_dict(sc)
    d["start_pose"] = {"x": 0.1, "y": 0.1, "theta": 0.0}  # inside a wall
    with pytest.raises(ScenarioFormatError, match="free"):
        scenario_from_dict(d)
    with pytest.raises(ValueError, match="unique"):
        Scenario(grid=sc.grid, objects=[sc.objects[0], sc.objects[0]],
                 dynamic_obstacles=[], start_pose=sc.start_pose)
    with pytest.raises(ValueError, match="positive"):
        SceneObject("x", (1, 1, 1), (0.0, 1, 1), (1, 1))


def test_pose_theta_always_wrapped():
    p = Pose(0, 0, 7.0)
    assert -math.pi < p.theta <= math.pi
    q = step_kinematics(p, VelocityCommand(0.0, 100.0), 1.0)
    assert -math.pi < q.theta <= math.pi
