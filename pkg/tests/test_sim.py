import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from veg.sim import (Action, Detector, DetectorConfig, Effector, Gains, ObjectState, SimParams, WorldState,
                     footprint_gaps, perturb_world, rot_z, sample_body_points, step, world_from_scene)
from veg.demos import get_task


def _world(eff=(-0.1, 0.0, 0.02), objs=None, gap=0.08):
    objs = objs or [ObjectState("a", np.array([0.0, 0.0, 0.0]), radius=0.03, height=0.04)]
    return WorldState(Effector(np.array(eff, dtype=float), 0.0, gap), objs)


def _move(w, d, grip=False, dyaw=0.0):
    g = Gains()
    return step(w, Action((d[0] / g.xyz, d[1] / g.xyz, d[2] / g.xyz, dyaw / g.rot), grip))


def test_zero_action_is_identity():
    w = world_from_scene(get_task("stack").scene)
    w2 = step(w, Action((0.0, 0.0, 0.0, 0.0), False))
    assert np.array_equal(w2.effector.position, w.effector.position)
    for a, b in zip(w.objects, w2.objects):
        assert np.array_equal(a.position, b.position) and a.yaw == b.yaw


def test_attached_object_follows_rigidly():
    w = world_from_scene(get_task("simple-stack").scene)
    before = w.obj("octagon").position.copy()
    w2 = _move(w, (0.01, 0.0, 0.0), grip=True)
    assert np.allclose(w2.obj("octagon").position - before, [0.01, 0, 0], atol=1e-15)


def test_pushing_by_penetration_depth():
    # effector touching the object (0.05 apart), then driven 0.01 further
    w = _world(eff=(-0.05, 0.0, 0.02))
    w2 = _move(w, (0.01, 0.0, 0.0))
    assert w2.obj("a").position[0] == pytest.approx(0.01, abs=1e-12)
    assert w2.obj("a").position[1] == 0.0
    d = np.hypot(*(w2.obj("a").position[:2] - w2.effector.position[:2]))
    assert d >= 0.05 - 1e-9


def test_no_motion_without_contact():
    w = _world(eff=(-0.2, 0.0, 0.02))
    w2 = _move(w, (0.01, 0.02, 0.0))
    assert np.array_equal(w2.obj("a").position, w.obj("a").position)


def test_step_clipping():
    w = _world(eff=(-0.3, 0.0, 0.02))
    w2 = step(w, Action((1e6, 0.0, 0.0, 1e6), False))
    assert w2.effector.position[0] == pytest.approx(-0.3 + SimParams().step_clip)
    assert w2.effector.yaw == pytest.approx(SimParams().yaw_clip)


def test_grasp_only_on_closing_and_release_drops():
    w = _world(eff=(0.0, 0.0, 0.02))
    w = _move(w, (0, 0, 0), grip=True)
    assert w.obj("a").attached
    w = _move(w, (0.0, 0.0, 0.05), grip=True)
    assert w.obj("a").position[2] == pytest.approx(0.05)
    w = _move(w, (0.0, 0.0, 0.0), grip=False)
    assert not w.obj("a").attached and w.obj("a").position[2] == 0.0
    # already closed gripper moving onto an object does not grasp it
    w = _world(eff=(0.0, 0.0, 0.2), gap=0.01)
    w = _move(w, (0.0, 0.0, -0.05), grip=True)
    w = _move(w, (0.0, 0.0, -0.05), grip=True)
    w = _move(w, (0.0, 0.0, -0.05), grip=True)
    assert not w.obj("a").attached


def test_release_onto_support_stacks():
    base = ObjectState("b", np.array([0.2, 0.0, 0.0]), radius=0.04, height=0.02)
    w = _world(eff=(0.0, 0.0, 0.02), objs=[ObjectState("a", np.zeros(3), radius=0.03, height=0.04), base])
    w = _move(w, (0, 0, 0), grip=True)
    w = _move(w, (0, 0, 0.05), grip=True)
    for _ in range(4):
        w = _move(w, (0.05, 0, 0), grip=True)
    w = _move(w, (0, 0, 0), grip=False)
    assert w.obj("a").position[2] == pytest.approx(0.02)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_random_walks_never_interpenetrate_and_keep_attach_offset(seed):
    rng = np.random.default_rng(seed)
    objs = [ObjectState(f"o{i}", np.array([0.08 * i - 0.08, 0.05 * (i % 2), 0.0]), radius=0.03, height=0.04)
            for i in range(3)]
    w = _world(eff=(-0.2, 0.0, 0.02), objs=objs)
    held = None
    for _ in range(40):
        du = rng.normal(0, 20, 4)
        w2 = step(w, Action(tuple(du), bool(rng.random() < 0.3)))
        assert min(footprint_gaps(w2), default=0.0) >= -1e-9
        h = w2.attached()
        if h is not None and held is not None and held.id == h.id and w.attached() is not None:
            rel = rot_z(-w2.effector.yaw) @ (h.position - w2.effector.position)
            rel_prev = rot_z(-w.effector.yaw) @ (w.obj(h.id).position - w.effector.position)
            assert np.allclose(rel, rel_prev, atol=1e-12)
        held = h
        w = w2


def test_detector_exact_without_noise():
    w = world_from_scene(get_task("stack").scene)
    det = Detector(DetectorConfig(sigma=0.0), sample_body_points(w, 4))
    f = det.detect(w, 0)
    assert f["octagon"].position == tuple(w.obj("octagon").position)
    assert f.hand().finger_gap == w.effector.gripper_gap


def test_point_rotation_by_hand():
    o = ObjectState("a", np.array([1.0, 2.0, 0.0]), yaw=np.pi / 2)
    w = _world(objs=[o])
    det = Detector(DetectorConfig(sigma=0.0), {"a": np.array([[0.1, 0.0, 0.0]])})
    p = np.asarray(det.detect(w, 0)["a/p0"].position) - o.position
    assert np.allclose(p, [0.0, 0.1, 0.0], atol=1e-15)


def test_detector_noise_std():
    sigma = 0.002
    w = _world()
    det = Detector(DetectorConfig(sigma=sigma, seed=9), {})
    truth = w.obj("a").position
    samples = np.array([det.detect(w, t)["a"].position for t in range(34000)]) - truth
    est = samples.ravel()[:100000].std()
    assert abs(est - sigma) <= 0.05 * sigma


def test_occlusion_holds_first_reading():
    w = _world(eff=(-0.3, 0.0, 0.02))
    det = Detector(DetectorConfig(sigma=0.001, p_occlusion=0.999999, seed=1), sample_body_points(w, 2))
    f0 = det.detect(w, 0)
    for t in range(1, 5):
        w = _move(w, (0.01, 0.0, 0.0))
        ft = det.detect(w, t)
        assert [e.position for e in ft.entities] == [e.position for e in f0.entities]
        assert all(e.occluded for e in ft.entities)


def test_clutter_does_not_change_other_readings():
    w = _world()
    w2 = _world(objs=[*w.objects, ObjectState("z", np.array([0.5, 0.5, 0.0]))])
    cfg = DetectorConfig(seed=3)
    fa = Detector(cfg, sample_body_points(w, 3)).detect(w, 0)
    fb = Detector(cfg, sample_body_points(w2, 3)).detect(w2, 0)
    assert all(fa[e.id].position == fb[e.id].position for e in fa.entities)


def test_perturbation_stays_in_ball():
    w = world_from_scene(get_task("push-straight").scene)
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = perturb_world(w, 0.06, rng)
        assert np.linalg.norm(p.effector.position - w.effector.position) <= 0.03 + 1e-12
        for a, b in zip(w.objects, p.objects):
            assert np.linalg.norm(a.position - b.position) <= 0.03 + 1e-12
        assert min(footprint_gaps(p), default=0.0) >= 0
