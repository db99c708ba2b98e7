import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hgm.errors import DimensionMismatch
from hgm.harness import load_config
from hgm.harness.pipeline import check_gains
from hgm.lowlevel import (ImpedanceGains, JointFeedback, current_command, default_gains, impedance_torque,
                          joint_energy, overshoot, settling_time, simulate_joint, step_response)
from hgm.world import Simulator, reset_world


def one(kp1=0.0, kd1=0.0, kp2=0.0, kd2=0.0):
    return ImpedanceGains([kp1], [kd1], [kp2], [kd2])


def fb(q=0.0, qd=0.0, tau=0.0, taud=0.0):
    return JointFeedback([q], [qd], [tau], [taud])


def test_impedance_equilibrium():
    g = ImpedanceGains(np.full(3, 50.0), np.full(3, 4.0), np.ones(3), np.ones(3))
    q = np.array([0.1, -0.4, 1.2])
    out = impedance_torque(q, JointFeedback(q, np.zeros(3), np.zeros(3), np.zeros(3)), g)
    np.testing.assert_array_equal(out, 0.0)


def test_impedance_hand_case():
    # 100 * 0.1 - 20 * 0.5
    assert impedance_torque([0.1], fb(q=0.0, qd=0.5), one(kp1=100.0, kd1=20.0))[0] == pytest.approx(0.0, abs=1e-15)


def test_impedance_clamps_to_limit():
    assert impedance_torque([1.0], fb(), one(kp1=1000.0), limit=350.0)[0] == 350.0
    assert impedance_torque([-1.0], fb(), one(kp1=1000.0), limit=350.0)[0] == -350.0


def test_current_hand_cases():
    g = one(kp2=5.0, kd2=2.0)
    assert current_command([3.0], fb(tau=3.0), g)[0] == 0.0
    assert current_command([2.0], fb(tau=0.0, taud=1.0), g)[0] == pytest.approx(8.0)
    assert current_command([0.0], fb(), g)[0] == 0.0


def test_length_mismatch():
    g = ImpedanceGains(np.ones(2), np.ones(2), np.ones(2), np.ones(2))
    with pytest.raises(DimensionMismatch):
        impedance_torque(np.zeros(3), JointFeedback(np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)), g)
    with pytest.raises(DimensionMismatch):
        current_command(np.zeros(2), JointFeedback(np.zeros(2), np.zeros(2), np.zeros(3), np.zeros(2)), g)


def test_gains_reject_negative_values():
    with pytest.raises(ValueError):
        ImpedanceGains([1.0], [-1.0], [0.0], [0.0])


vec = arrays(np.float64, 4, elements=st.floats(-10, 10))


@given(vec, vec, vec, vec, st.floats(-3, 3))
def test_impedance_is_linear(e1, v1, e2, v2, c):
    g = ImpedanceGains(np.array([10.0, 200.0, 3.0, 0.5]), np.array([1.0, 0.2, 7.0, 0.0]), np.ones(4), np.ones(4))
    z = np.zeros(4)

    def law(e, v):
        return impedance_torque(e, JointFeedback(z, v, z, z), g)

    np.testing.assert_allclose(law(e1 + c * e2, v1 + c * v2), law(e1, v1) + c * law(e2, v2), atol=1e-9)


@given(vec, vec, vec, vec)
def test_current_law_is_linear(t1, r1, t2, r2):
    g = ImpedanceGains(np.ones(4), np.ones(4), np.array([1.0, 5.0, 0.1, 2.0]), np.array([0.001, 0.3, 0.0, 1.0]))
    z = np.zeros(4)

    def law(t, r):
        return current_command(t, JointFeedback(z, z, z, r), g)

    np.testing.assert_allclose(law(t1 + t2, r1 + r2), law(t1, r1) + law(t2, r2), atol=1e-9)


@pytest.mark.parametrize("kp, kd", [(20.0, 2 * np.sqrt(20.0 * 0.05)), (1600.0, 0.0), (100.0, 5.0)])
def test_tracked_joint_energy_never_increases(kp, kd):
    inertia = 0.05
    qs, vs = simulate_joint(0.3, -0.2, 0.5, kp, kd, inertia, 0.002, 10_000)
    e = joint_energy(qs, vs, 0.3, kp, inertia)
    assert np.max(np.diff(e)) <= 1e-6


def test_single_joint_step_settles():
    kp, inertia = 20.0, 0.05
    qs, _ = simulate_joint(0.2, 0.0, 0.0, kp, 2 * np.sqrt(kp * inertia), inertia, 0.002, 1000)
    t = 0.002 * np.arange(len(qs))
    assert np.isfinite(settling_time(t, qs, 0.2, 0.0))
    assert overshoot(qs, 0.2, 0.0) <= 0.25


@pytest.mark.parametrize("joint", range(8))
def test_full_simulator_step_response(joint):
    w = reset_world(1)
    delta = 0.1 if joint < 3 else 0.2
    if w.q[joint] + delta > w.cfg.robot.upper[joint] - 0.05:
        delta = -delta
    t, trace, target = step_response(w, joint, delta, 2.0, default_gains(w.cfg.robot))
    ts = settling_time(t, trace, target, w.q[joint], 0.02)
    assert ts < 2.0
    assert overshoot(trace, target, w.q[joint]) <= 0.25


def test_stage_one_passes_on_defaults():
    rows = check_gains(load_config())
    assert all(r["ok"] for r in rows), rows


def test_motor_slews_at_motor_constant():
    sim = Simulator(reset_world(1))
    km, dt = sim.cfg.robot.motor_constant, sim.cfg.dt
    current = np.array([0.5, -0.5, 0.1, 0.1, 0.05, 0.0, -0.05, 0.02])
    tau = sim.actuate(current).copy()
    np.testing.assert_allclose(tau, km * current * dt, rtol=1e-12)


def test_settling_helpers():
    t = np.arange(5.0)
    assert settling_time(t, np.array([0.0, 0.5, 1.1, 1.0, 1.0]), 1.0, 0.0) == 3.0
    assert settling_time(t, np.array([0.0, 0.5, 1.0, 1.0, 0.5]), 1.0, 0.0) == np.inf
    assert overshoot(np.array([0.0, 1.1, 1.0]), 1.0, 0.0) == pytest.approx(0.1)
