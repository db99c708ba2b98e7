import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from hgm.core import LevelCommand
from hgm.errors import Infeasible
from hgm.manip import MinJerkProblem, MpcConfig, ManipulationPolicy, ik_2link, mpc_step, rollout, solve_min_jerk
from hgm.world import RobotParams, forward_kinematics


def quintic_oracle(p0, pf, tf):
    """Rest-to-rest minimum-jerk polynomial from its six boundary conditions."""
    rows, rhs = [], []
    for t, (p, v, a) in ((0.0, (p0, 0.0, 0.0)), (tf, (pf, 0.0, 0.0))):
        rows.append([t**k for k in range(6)])
        rows.append([k * t ** (k - 1) if k >= 1 else 0.0 for k in range(6)])
        rows.append([k * (k - 1) * t ** (k - 2) if k >= 2 else 0.0 for k in range(6)])
        rhs.extend((p, v, a))
    coef = np.linalg.solve(np.array(rows), np.array(rhs))
    poly = np.polynomial.Polynomial(coef)
    jerk = poly.deriv(3)
    cost = 0.5 * (jerk**2).integ()(tf) - 0.5 * (jerk**2).integ()(0.0)
    return poly, cost


def test_rest_at_target_needs_no_jerk():
    tr = solve_min_jerk(MinJerkProblem(p0=0.3, pf=0.3))
    np.testing.assert_array_equal(tr.jerk_inputs, 0.0)
    assert tr.objective_value == 0.0


def test_rest_to_rest_matches_quintic():
    tr = solve_min_jerk(MinJerkProblem(p0=0.0, pf=1.0, tf=1.0, n_steps=200))
    poly, cost = quintic_oracle(0.0, 1.0, 1.0)
    assert np.max(np.abs(tr.positions - poly(tr.times))) < 1e-3
    assert cost == pytest.approx(360.0, rel=1e-12)
    assert tr.objective_value == pytest.approx(cost, rel=1e-3)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 3.0), st.sampled_from([10, 24, 50]))
def test_rest_to_rest_midpoint(p0, pf, tf, n):
    tr = solve_min_jerk(MinJerkProblem(p0=p0, pf=pf, tf=tf, n_steps=n))
    assert tr.positions[n // 2] == pytest.approx(0.5 * (p0 + pf), abs=1e-6)


def test_trajectory_is_a_constant_jerk_rollout():
    prob = MinJerkProblem(p0=0.1, pf=-0.4, v0=0.3, a0=-1.0, tf=1.2, n_steps=30)
    tr = solve_min_jerk(prob)
    xs = rollout([prob.p0, prob.v0, prob.a0], tr.jerk_inputs, prob.dt)
    np.testing.assert_allclose(xs[:, 0], tr.positions, atol=1e-12)
    np.testing.assert_allclose(xs[-1], [prob.pf, prob.vf, prob.af], atol=1e-9)


def test_boundary_outside_bounds_is_infeasible():
    with pytest.raises(Infeasible):
        solve_min_jerk(MinJerkProblem(p0=0.0, pf=1.0, p_bounds=(-0.5, 0.5)))


def test_active_bounds_are_respected():
    prob = MinJerkProblem(p0=0.0, pf=0.5, v0=1.5, tf=1.0, n_steps=25, p_bounds=(-0.6, 0.6), v_bounds=(-2, 2),
                          a_bounds=(-10, 10))
    tr = solve_min_jerk(prob)
    assert tr.positions.max() <= 0.6 + 1e-8
    assert np.abs(tr.velocities).max() <= 2 + 1e-8 and np.abs(tr.accelerations).max() <= 10 + 1e-8


def _terminal_map(n, dt):
    """Columns: terminal (p, v, a) produced by a unit jerk in each interval (from rollout)."""
    return np.column_stack([rollout(np.zeros(3), np.eye(n)[k], dt)[-1] for k in range(n)])


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_stationarity_with_inactive_bounds(p0, pf, v0, a0):
    prob = MinJerkProblem(p0=p0, pf=pf, v0=v0, a0=a0, tf=1.0, n_steps=20)
    u = solve_min_jerk(prob).jerk_inputs
    E = _terminal_map(prob.n_steps, prob.dt)
    # optimal u lies in the row space of the equality constraints
    proj = E.T @ np.linalg.solve(E @ E.T, E @ u)
    assert np.max(np.abs(u - proj)) < 1e-6


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-1, 1), st.integers(0, 1000))
def test_solution_beats_feasible_perturbations(p0, pf, v0, seed):
    prob = MinJerkProblem(p0=p0, pf=pf, v0=v0, tf=1.0, n_steps=15, p_bounds=(-0.6, 0.6), v_bounds=(-2, 2),
                          a_bounds=(-10, 10))
    try:
        tr = solve_min_jerk(prob)
    except Infeasible:
        assume(False)
    E = _terminal_map(prob.n_steps, prob.dt)
    null = np.linalg.svd(E)[2][3:].T
    rng = np.random.default_rng(seed)
    x0 = [prob.p0, prob.v0, prob.a0]
    tried = 0
    for _ in range(100):
        u = tr.jerk_inputs + null @ rng.normal(scale=0.5, size=null.shape[1])
        xs = rollout(x0, u, prob.dt)
        if np.abs(xs[:, 0]).max() > 0.6 or np.abs(xs[:, 1]).max() > 2 or np.abs(xs[:, 2]).max() > 10:
            continue
        tried += 1
        assert 0.5 * float(u @ u) * prob.dt >= tr.objective_value - 1e-9
    assume(tried > 0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.2, 5.0))
def test_scale_covariance(p0, pf, c):
    a = solve_min_jerk(MinJerkProblem(p0=p0, pf=pf, n_steps=20, p_bounds=(-10, 10)))
    b = solve_min_jerk(MinJerkProblem(p0=c * p0, pf=c * pf, n_steps=20, p_bounds=(-10 * c, 10 * c)))
    np.testing.assert_allclose(b.positions, c * a.positions, atol=1e-9 * max(1.0, c))
    assert b.objective_value == pytest.approx(c * c * a.objective_value, rel=1e-9, abs=1e-12)


# ---------------------------------------------------------------- MPC


def test_mpc_fixed_point():
    np.testing.assert_allclose(mpc_step((0.2, 0.0, 0.0), 0.2), [0.2, 0.0, 0.0], atol=1e-12)


def test_mpc_projects_out_of_bounds_target():
    cfg = MpcConfig()
    x = np.zeros(3)
    for _ in range(100):
        x = mpc_step(x, 5.0, cfg)
        assert cfg.p_bounds[0] <= x[0] <= cfg.p_bounds[1]
    assert x[0] == pytest.approx(cfg.p_bounds[1], abs=1e-3)


@given(st.floats(-0.55, 0.55), st.floats(-0.55, 0.55))
def test_mpc_rollout_approaches_without_overshoot(start, target):
    x = np.array([start, 0.0, 0.0])
    dist = [abs(start - target)]
    for _ in range(60):
        x = mpc_step(x, target)
        dist.append(abs(x[0] - target))
    assert np.all(np.diff(dist) <= 1e-9)
    sign = np.sign(target - start)
    assert sign * (x[0] - target) <= 1e-6
    assert dist[-1] < 1e-3 * max(1.0, dist[0])


# ---------------------------------------------------------------- IK


def test_ik_fully_extended():
    assert ik_2link((0.7, 0.0), (0.3, 0.4)) == pytest.approx((0.0, 0.0), abs=1e-7)


def test_ik_unit_links_elbow_down():
    q = ik_2link((1.0, 1.0), (1.0, 1.0), elbow_branch="down")
    assert q == pytest.approx((0.0, math.pi / 2), abs=1e-12)
    np.testing.assert_allclose(forward_kinematics(q, (1.0, 1.0)), (1.0, 1.0), atol=1e-12)


def test_ik_unreachable_lands_on_boundary_along_ray():
    l1, l2 = 0.5, 0.7
    ray = np.array([0.6, -0.8])
    tip = forward_kinematics(ik_2link(ray * (l1 + l2 + 1.0), (l1, l2)), (l1, l2))
    np.testing.assert_allclose(tip, ray * (l1 + l2), atol=1e-7)


@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(0.05, 0.95), st.floats(-math.pi, math.pi),
       st.sampled_from(["up", "down"]))
def test_ik_round_trip(l1, l2, frac, theta, branch):
    r_min, r_max = abs(l1 - l2), l1 + l2
    r = r_min + frac * (r_max - r_min)
    target = r * np.array([math.cos(theta), math.sin(theta)])
    q = ik_2link(target, (l1, l2), elbow_branch=branch)
    np.testing.assert_allclose(forward_kinematics(q, (l1, l2)), target, atol=1e-9)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_ik_respects_limits(x, y):
    limits = ((-0.5, 2.0), (0.0, 2.6))
    q1, q2 = ik_2link((x, y), (0.3, 0.3), limits, "down")
    assert limits[0][0] <= q1 <= limits[0][1] and limits[1][0] <= q2 <= limits[1][1]


def test_manipulation_policy_stays_in_limits_under_wild_commands():
    robot = RobotParams()
    pol = ManipulationPolicy(robot)
    rng = np.random.default_rng(0)
    q = np.array([1.2875, -2.0538, -1.2875, 2.0538])
    for _ in range(50):
        cmd = LevelCommand(pelvis_target=np.zeros(2), left_hand_target=rng.uniform(-5, 5, 2),
                           right_hand_target=rng.uniform(-5, 5, 2), torso_yaw_target=float(rng.uniform(-3, 3)))
        arms, torso = pol.act({"arm_joint_pos": q}, cmd)
        assert np.all(arms >= np.asarray(robot.lower[4:]) - 1e-12)
        assert np.all(arms <= np.asarray(robot.upper[4:]) + 1e-12)
        assert robot.lower[3] <= torso <= robot.upper[3]
        q = arms
