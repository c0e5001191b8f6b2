import math

import pytest

from gazenav import packs
from gazenav.gaze import TaskClass, gen_params_for, denormalize_gaze, NormalizedGaze
from gazenav.server import LiveSession, build_app
from gazenav.sim import SimConfig


@pytest.fixture
def session(knn_models):
    return LiveSession(packs.empty_room(0), knn_models)


def center_pixel(snapshot, label):
    box = next(b for b in snapshot["boxes"] if b["label"] == label)
    x0, y0, x1, y1 = box["avg_rect"]
    uc, vc = gen_params_for(label).functional_center
    return (x0 + uc * (x1 - x0), y0 + vc * (y1 - y0))


def test_cursor_in_interactive_region_flips_color_within_capacity_plus_5(session):
    cap = session.cfg.buffer_capacity
    snap = session.tick()
    assert snap["intent"]["color"] == "green"
    flipped_at = None
    for i in range(cap + 5):
        px = center_pixel(snap, "chair")
        session.submit_gaze(*px)
        snap = session.tick()
        if snap["intent"]["color"] == "purple":
            flipped_at = i + 1
            break
    assert flipped_at is not None and flipped_at <= cap + 5
    assert snap["intent"]["state"] == "intent_detected"


def test_wink_during_purple_starts_navigation_within_2_ticks(session):
    snap = session.tick()
    for _ in range(60):
        session.submit_gaze(*center_pixel(snap, "chair"))
        snap = session.tick()
        if snap["intent"]["color"] == "purple":
            break
    assert snap["intent"]["color"] == "purple"
    session.submit_gaze(*center_pixel(snap, "chair"))
    session.submit_wink()
    moved = False
    start = packs.empty_room(0).start_pose
    for _ in range(2):
        snap = session.tick()
        if snap["intent"]["state"] == "goal_dispatched" and (
                snap["cmd"] != [0.0, 0.0] or snap["path"]):
            moved = True
            break
    assert moved
    assert snap["metrics_partial"]["dispatched_object"] == "chair"
    assert snap["goal"]["object"] == "chair"


def test_no_gaze_means_empty_buffer_and_green(session):
    for _ in range(50):
        snap = session.tick()
    assert snap["intent"]["buffer_fill"] == 0
    assert snap["intent"]["color"] == "green"
    assert snap["metrics_partial"]["goal_dispatched"] is False


def test_reset_restores_initial_state(session):
    snap = session.tick()
    for _ in range(45):
        session.submit_gaze(*center_pixel(snap, "chair"))
        snap = session.tick()
    assert snap["intent"]["buffer_fill"] > 0
    session.reset()
    snap = session.tick()
    assert snap["intent"]["buffer_fill"] == 0
    start = packs.empty_room(0).start_pose
    assert snap["pose"][0] == start.x and snap["pose"][1] == start.y


def test_snapshot_schema(session):
    snap = session.tick()
    assert snap["type"] == "state"
    for key in ("t", "pose", "path", "boxes", "gaze", "intent", "obstacles",
                "metrics_partial"):
        assert key in snap
    for b in snap["boxes"]:
        assert set(b) == {"label", "rect", "avg_rect"}
    assert snap["intent"]["color"] in ("green", "purple")
    init = session.init_message()
    assert init["type"] == "init"
    assert init["grid"]["width"] == 100
    assert init["tick_hz"] == 25


def test_full_session_drive_to_goal(knn_models):
    session = LiveSession(packs.empty_room(0), knn_models)
    snap = session.tick()
    winked = False
    for _ in range(2000):
        if snap["metrics_partial"]["reached"]:
            break
        if snap["intent"]["state"] in ("idle", "observing", "intent_detected"):
            session.submit_gaze(*center_pixel(snap, "chair"))
        if snap["intent"]["color"] == "purple" and not winked:
            session.submit_wink()
            winked = True
        snap = session.tick()
    assert snap["metrics_partial"]["reached"] is True
    assert snap["metrics_partial"]["stop_distance"] <= 0.25
    assert snap["intent"]["state"] == "idle"  # ready for the next goal


# --- websocket protocol -----------------------------------------------------

def test_websocket_protocol_and_driver_role(knn_models):
    from fastapi.testclient import TestClient

    app = build_app(packs.empty_room(0), knn_models, tick_hz=200)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws1:
            init = ws1.receive_json()
            assert init["type"] == "init"
            ws1.send_json({"type": "claim_driver"})
            msgs = [ws1.receive_json() for _ in range(8)]
            kinds = {m["type"] for m in msgs}
            assert "role" in kinds and "state" in kinds
            role = next(m for m in msgs if m["type"] == "role")
            assert role["driver"] is True
            with client.websocket_connect("/ws") as ws2:
                init2 = ws2.receive_json()
                assert init2["type"] == "init"
                ws2.send_json({"type": "claim_driver"})
                while True:
                    m = ws2.receive_json()
                    if m["type"] == "role":
                        assert m["driver"] is False
                        break
                # both connections keep receiving identical state snapshots
                s2 = ws2.receive_json()
                assert s2["type"] == "state"
            ws1.send_json({"type": "gaze", "x_px": 100.0, "y_px": 100.0})
            ws1.send_json({"type": "reset"})
            s = ws1.receive_json()
            assert s["type"] == "state"
