import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physreason.core import BodyState, ObjectSpec, ValidationError
from physreason.physics import (
    InitialConditions,
    PhysicsConfig,
    SimulationError,
    conservation_drift,
    continue_record,
    coulomb_force,
    detect_events,
    integrate,
    load_physics_config,
    resolve_collision,
    simulate,
    step,
    write_csv,
)


def obj(i, shape="sphere", mass="light", charge="neutral", color="red"):
    return ObjectSpec(i, color, shape, "metal", mass=mass, charge=charge)


def test_coulomb_inverse_square_and_newton_pair():
    a = BodyState((0.0, 0.0), (0.0, 0.0), 0.3)
    b = BodyState((2.0, 0.0), (0.0, 0.0), 0.3)
    f = coulomb_force(a, b, 1, 1)
    # like charges push a toward -x with magnitude k / r^2
    assert np.allclose(f, [-8.0 / 4.0, 0.0])
    assert np.allclose(coulomb_force(b, a, 1, 1), -f)
    assert np.allclose(coulomb_force(a, b, 1, -1), -f)
    far = BodyState((4.0, 0.0), (0.0, 0.0), 0.3)
    assert np.isclose(np.linalg.norm(coulomb_force(a, far, 1, 1)), np.linalg.norm(f) / 4)


def test_coulomb_clamped_inside_contact():
    a = BodyState((0.0, 0.0), (0.0, 0.0), 0.3)
    b = BodyState((0.1, 0.0), (0.0, 0.0), 0.3)
    f = coulomb_force(a, b, 1, 1)
    assert np.isclose(np.linalg.norm(f), 8.0 / 0.6 ** 2)


def test_head_on_heavy_light_closed_form():
    # 1D elastic: v1' = (m1-m2)/(m1+m2) v1, v2' = 2 m1/(m1+m2) v1
    a = BodyState((0.0, 0.0), (1.0, 0.0), 0.3)
    b = BodyState((0.6, 0.0), (0.0, 0.0), 0.3)
    a2, b2 = resolve_collision(a, b, 5.0, 1.0)
    assert abs(a2.velocity[0] - 2 / 3) < 1e-9
    assert abs(b2.velocity[0] - 5 / 3) < 1e-9
    assert abs(a2.velocity[1]) < 1e-12 and abs(b2.velocity[1]) < 1e-12


def test_separating_bodies_untouched():
    a = BodyState((0.0, 0.0), (-1.0, 0.0), 0.3)
    b = BodyState((0.5, 0.0), (1.0, 0.0), 0.3)
    a2, b2 = resolve_collision(a, b, 1.0, 1.0)
    assert np.array_equal(a2.velocity, a.velocity) and np.array_equal(b2.velocity, b.velocity)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.5, 5.0), st.floats(0.5, 5.0),
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
    st.floats(0, 2 * np.pi),
)
def test_collision_conserves_momentum_and_energy(ma, mb, vax, vay, vbx, vby, theta):
    n = np.array([np.cos(theta), np.sin(theta)])
    a = BodyState((0.0, 0.0), (vax, vay), 0.3)
    b = BodyState(tuple(0.59 * n), (vbx, vby), 0.3)
    a2, b2 = resolve_collision(a, b, ma, mb)
    p0 = ma * np.array(a.velocity) + mb * np.array(b.velocity)
    p1 = ma * np.array(a2.velocity) + mb * np.array(b2.velocity)
    assert np.allclose(p0, p1, atol=1e-9)
    e0 = 0.5 * ma * np.dot(a.velocity, a.velocity) + 0.5 * mb * np.dot(b.velocity, b.velocity)
    e1 = 0.5 * ma * np.dot(a2.velocity, a2.velocity) + 0.5 * mb * np.dot(b2.velocity, b2.velocity)
    assert np.isclose(e0, e1, rtol=1e-9, atol=1e-9)


def test_wall_reflects_velocity():
    cfg = PhysicsConfig()
    init = InitialConditions((obj(0),), [[4.6, 0.0]], [[2.0, 0.0]])
    traj = integrate(init, 1.0, cfg)
    assert np.all(np.abs(traj.positions[..., 0]) <= cfg.arena_half_extent)
    assert traj.velocities[-1, 0, 0] == pytest.approx(-2.0)
    assert traj.wall_impulse[-1, 0] == pytest.approx(-4.0)


def test_step_advances_free_body():
    s = step([BodyState((0.0, 0.0), (1.0, 0.5), 0.3)], [obj(0)])
    assert np.allclose(s[0].position, [0.002, 0.001])


def test_frame_count_and_initial_frame():
    init = InitialConditions((obj(0), obj(1, "cube")), [[-2, 0], [2, 0]], [[1, 0], [-1, 0]])
    rec = simulate(init, 5.0)
    assert rec.n_frames == 125
    assert np.array_equal(rec.positions[0], init.positions)


def test_head_on_collision_event():
    init = InitialConditions((obj(0), obj(1)), [[-2, 0], [2, 0]], [[1, 0], [-1, 0]])
    rec = simulate(init, 3.0)
    cols = [e for e in rec.events if e.kind == "collision"]
    # gap of 3.4 closed at 2 units/s -> contact at 1.7 s, frame 43 at 25 fps
    assert [(e.participants, e.frame) for e in cols] == [((0, 1), 43)]


def test_charge_events_and_frame_fallback():
    objs = (obj(0, charge="positive"), obj(1, charge="positive"))
    init = InitialConditions(objs, [[-1, 0], [1, 0]], [[0, 0], [0, 0]])
    rec = simulate(init, 2.0)
    kinds = {e.kind for e in rec.events}
    assert "repulsion" in kinds and "attraction" not in kinds
    flipped = {0: obj(0, charge="positive"), 1: obj(1, charge="negative")}
    assert "attraction" in {e.kind for e in detect_events(rec, flipped)}


def test_continuation_starts_at_last_frame():
    init = InitialConditions((obj(0), obj(1)), [[-2, 0], [2, 1]], [[1, 0], [-1, 0]])
    rec = simulate(init, 5.0)
    fut = continue_record(rec, 2.0)
    assert fut.n_frames == 50
    assert np.array_equal(fut.positions[0], rec.positions[-1])
    assert not any(e.kind == "in" and e.frame == 0 for e in fut.events)


def test_simulation_deterministic():
    init = InitialConditions((obj(0, charge="negative"), obj(1, charge="positive"), obj(2, mass="heavy")),
                             [[-2, 0], [2, 1], [0, -2]], [[1, 0], [-1, 0], [0.3, 1]])
    a, b = simulate(init, 5.0), simulate(init, 5.0)
    assert a == b


def test_conservation_small_batch():
    rng = np.random.default_rng(4)
    for _ in range(5):
        objs = (obj(0, charge="positive"), obj(1, charge="negative"), obj(2, mass="heavy"))
        pos = np.array([[-2.5, 0.3], [2.0, -1.0], [0.0, 2.5]])
        vel = rng.uniform(-2, 2, size=(3, 2))
        dp, de = conservation_drift(InitialConditions(objs, pos, vel), 5.0)
        assert dp < 1e-6 and de < 1e-3


def test_overlap_rejected_by_check():
    init = InitialConditions((obj(0), obj(1)), [[0, 0], [0.2, 0]], [[0, 0], [0, 0]])
    with pytest.raises(ValidationError):
        init.check(PhysicsConfig())


def test_nonfinite_state_raises():
    with pytest.raises(ValidationError):
        InitialConditions((obj(0),), [[np.nan, 0]], [[0, 0]])
    with pytest.raises(SimulationError):
        step([BodyState((1.79e308, 0.0), (1e308, 0.0), 0.3)], [obj(0)],
             PhysicsConfig(open_boundary=True, dt_substep=0.04))


def test_config_validation_and_loading(tmp_path):
    with pytest.raises(ValidationError):
        PhysicsConfig(dt_substep=0.003)
    with pytest.raises(ValidationError):
        PhysicsConfig(restitution=1.5)
    (tmp_path / "c.toml").write_text("[physics]\nk_coulomb = 4.0\n")
    assert load_physics_config(tmp_path / "c.toml").k_coulomb == 4.0
    (tmp_path / "c.json").write_text(json.dumps({"restitution": 0.5}))
    assert load_physics_config(tmp_path / "c.json").restitution == 0.5
    (tmp_path / "bad.json").write_text(json.dumps({"gravity": 1}))
    with pytest.raises(ValidationError):
        load_physics_config(tmp_path / "bad.json")


def test_csv_dump(tmp_path):
    init = InitialConditions((obj(0),), [[0, 0]], [[1, 0]])
    rec = simulate(init, 0.2)
    write_csv(rec, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "frame,id,x,y,vx,vy" and len(lines) == 1 + rec.n_frames
