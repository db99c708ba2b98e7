import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgm.errors import PhaseOutOfRange
from hgm.loco import (LocoRewardWeights, LocoTrainConfig, ReferenceMotion, SacConfig, SacNets, gaussian_log_prob,
                      locomotion_reward, rbf_kernel, sac_losses, sac_update, sample_action, train_locomotion, with_sac)
from hgm.replay import ReplayBuffer

# ---------------------------------------------------------------- kernel


def test_rbf_examples():
    assert rbf_kernel(0.3, 0.3, 7.0) == 1.0
    assert rbf_kernel([1.0, -2.0], [5.0, 9.0], 0.0) == 1.0
    assert rbf_kernel(0.0, 1.0, 1.0) == pytest.approx(0.367879, abs=1e-6)
    # vectors use the squared Euclidean distance: 3-4-5 triangle
    assert rbf_kernel([0.0, 0.0], [3.0, 4.0], 0.01) == pytest.approx(math.exp(-0.25), rel=1e-15)


def test_rbf_rejects_negative_width():
    with pytest.raises(ValueError):
        rbf_kernel(0.0, 1.0, -1.0)


@given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3), st.floats(0.01, 50))
def test_rbf_range_and_monotonicity(x_hat, d1, d2, alpha):
    near, far = sorted((d1, d2))
    k_near = rbf_kernel(x_hat, x_hat + near, alpha)
    k_far = rbf_kernel(x_hat, x_hat + far, alpha)
    assert 0.0 <= k_far <= k_near <= 1.0
    assert rbf_kernel(x_hat, x_hat, alpha) == 1.0


# ---------------------------------------------------------------- reward


def _on_reference(ref, phase):
    yaw, loads, _ = ref.at(phase)
    obs = {"contact_load": loads, "pelvis_target": np.zeros(2), "base_ang_vel": 0.0, "base_lin_vel": np.zeros(2)}
    return obs, np.array([0.0, 0.0, yaw])


@pytest.mark.parametrize("phase", [0.0, 1.0, 3.5, 6.2])
def test_perfect_state_earns_one(phase):
    ref = ReferenceMotion()
    obs, action = _on_reference(ref, phase)
    assert locomotion_reward(obs, action, ref, phase) == pytest.approx(1.0, abs=1e-12)


class _FlippedContacts(ReferenceMotion):
    """Reference whose contact pattern disagrees with its own loads."""

    def at(self, phase):
        yaw, loads, contact = super().at(phase)
        return yaw, loads, ~contact


def test_contact_mismatch_costs_the_contact_weight():
    ref = ReferenceMotion()
    obs, action = _on_reference(ref, 1.0)
    r = locomotion_reward(obs, action, _FlippedContacts(), 1.0)
    # imitation group drops to 0.5 + 0.4 = 0.9, task group stays at 1
    assert r == pytest.approx(0.5 * 0.9 + 0.5 * 1.0, abs=1e-12)


def test_group_weights_sum_to_one():
    w = LocoRewardWeights()
    assert (w.w_imitation, w.w_task) == (0.5, 0.5)
    assert abs(w.joint + w.pose_imitation + w.contact - 1.0) <= 1e-12
    assert abs(w.pose_task + w.goal + w.vel + w.torque - 1.0) <= 1e-12
    assert (w.joint, w.pose_imitation, w.contact) == (0.5, 0.4, 0.1)
    assert (w.pose_task, w.goal, w.vel, w.torque) == (0.15, 0.25, 0.5, 0.1)


@pytest.mark.parametrize("phase", [-0.1, 2 * math.pi, 7.0, math.nan])
def test_phase_out_of_range(phase):
    ref = ReferenceMotion()
    obs, action = _on_reference(ref, 0.5)
    with pytest.raises(PhaseOutOfRange):
        locomotion_reward(obs, action, ref, phase)


def test_reference_is_periodic():
    ref = ReferenceMotion()
    a = ref.at(0.0)
    b = ref.at(math.nextafter(2 * math.pi, 0.0))
    assert a[0] == pytest.approx(b[0], abs=1e-12)
    np.testing.assert_array_equal(a[2], b[2])


# ---------------------------------------------------------------- SAC gradients

SMALL = SacConfig(state_dim=4, action_dim=2, hidden=(8, 8), action_low=(-0.5, -1.0), action_high=(0.5, 2.0),
                  alpha=0.3, gamma=0.9)


def _batch(rng, cfg, n=6):
    s = rng.normal(size=(n, cfg.state_dim))
    a = rng.uniform(cfg.action_low, cfg.action_high, size=(n, cfg.action_dim))
    r = rng.normal(size=n)
    s2 = rng.normal(size=(n, cfg.state_dim))
    done = (rng.uniform(size=n) < 0.3).astype(float)
    return s, a, r, s2, done


def _fd_check(nets, batch, cfg, eps, which, loss_index, grad_index, h=1e-6):
    _, grads = sac_losses(nets, batch, cfg, eps)
    analytic = np.concatenate([g.ravel() for g in grads[grad_index]])
    numeric = []
    for p in getattr(nets, which).params():
        flat = p.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = sac_losses(nets, batch, cfg, eps)[0][loss_index]
            flat[i] = keep - h
            down = sac_losses(nets, batch, cfg, eps)[0][loss_index]
            flat[i] = keep
            numeric.append((up - down) / (2 * h))
    numeric = np.array(numeric)
    scale = max(np.max(np.abs(numeric)), 1e-8)
    assert np.max(np.abs(analytic - numeric)) <= 1e-4 * scale


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_sac_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    nets = SacNets.create(SMALL, rng)
    # move the target net off the value net so the Bellman target is nontrivial
    for p in nets.v_target.params():
        p += rng.normal(scale=0.3, size=p.shape)
    for p in nets.policy.params():
        p += rng.normal(scale=0.3, size=p.shape)
    batch = _batch(rng, SMALL)
    eps = rng.standard_normal((batch[0].shape[0], SMALL.action_dim))
    _fd_check(nets, batch, SMALL, eps, "policy", 0, 0)
    _fd_check(nets, batch, SMALL, eps, "q", 1, 1)
    _fd_check(nets, batch, SMALL, eps, "v", 2, 2)


def _constant(net, value):
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    net.biases[-1][...] = value


def test_bellman_exact_batch_has_zero_critic_losses(rng):
    cfg = replace(SMALL, alpha=0.0)
    nets = SacNets.create(cfg, rng)
    c = 2.5
    for net in (nets.q, nets.v, nets.v_target):
        _constant(net, c)
    s, a, _, s2, done = _batch(rng, cfg, 16)
    r = c - cfg.gamma * (1.0 - done) * c
    eps = rng.standard_normal((16, cfg.action_dim))
    (_, j_q, j_v), (_, g_q, g_v) = sac_losses(nets, (s, a, r, s2, done), cfg, eps)
    assert j_q == 0.0 and j_v == 0.0
    assert all(np.all(g == 0.0) for g in g_q + g_v)


def test_one_dimensional_bandit_mean_goes_to_zero():
    cfg = SacConfig(state_dim=1, action_dim=1, hidden=(16,), action_low=(-1.0,), action_high=(1.0,), alpha=1e-3,
                    gamma=0.5, lr=3e-3, batch_size=64)
    rng = np.random.default_rng(7)
    nets = SacNets.create(cfg, rng)
    nets.policy.biases[-1][0] = 1.0  # start with a mean action near tanh(1)
    s = np.ones(1)

    def mean_action():
        return float(sample_action(nets.policy, s, cfg, "mean")[0][0])

    start = mean_action()
    buf = ReplayBuffer(5000, 1, 1)
    for _ in range(1500):
        a, _ = sample_action(nets.policy, s, cfg, "stochastic", rng)
        buf.add(s, a, -float(a[0]) ** 2, s, True)
        if len(buf) >= cfg.batch_size:
            sac_update(nets, buf.sample(cfg.batch_size, rng), cfg, rng)
    assert start > 0.7
    assert abs(mean_action()) < 0.1


def _entropy(nets, cfg, states, eps):
    out = nets.policy.forward(states)
    k = cfg.action_dim
    u = out[:, :k] + np.exp(out[:, k:]) * eps
    return -float(np.mean(gaussian_log_prob(u, out[:, :k], out[:, k:], cfg)))


@pytest.mark.parametrize("seed", range(10))
def test_larger_temperature_never_lowers_entropy(seed):
    # one plain gradient step on J_pi; Adam's sign-like first step is not monotone in alpha
    rng = np.random.default_rng(1000 + seed)
    batch = _batch(rng, SMALL, 32)
    held = rng.normal(size=(64, SMALL.state_dim))
    eps_held = rng.standard_normal((64, SMALL.action_dim))
    eps = rng.standard_normal((32, SMALL.action_dim))
    ent = []
    for alpha in (0.0, 0.2, 1.0, 5.0):
        cfg = replace(SMALL, alpha=alpha)
        nets = SacNets.create(SMALL, np.random.default_rng(seed))
        _, (g_pi, _, _) = sac_losses(nets, batch, cfg, eps)
        for p, g in zip(nets.policy.params(), g_pi):
            p -= 1e-3 * g
        ent.append(_entropy(nets, cfg, held, eps_held))
    assert all(b >= a - 1e-12 for a, b in zip(ent, ent[1:])), ent


# ---------------------------------------------------------------- sampling


def test_mean_mode_is_deterministic(rng):
    nets = SacNets.create(SacConfig(), rng)
    obs = rng.normal(size=10)
    a1, lp1 = sample_action(nets.policy, obs, SacConfig(), "mean")
    a2, lp2 = sample_action(nets.policy, obs, SacConfig(), "mean")
    np.testing.assert_array_equal(a1, a2)
    assert lp1 == lp2


def test_stochastic_samples_stay_within_bounds(rng):
    cfg = SacConfig()
    nets = SacNets.create(cfg, rng)
    nets.policy.biases[-1][cfg.action_dim:] = 10.0  # widest allowed spread
    obs = rng.normal(size=(100_000, cfg.state_dim))
    a, lp = sample_action(nets.policy, obs, cfg, "stochastic", rng)
    assert a.shape == (100_000, 3)
    assert np.all(a >= np.asarray(cfg.action_low)) and np.all(a <= np.asarray(cfg.action_high))
    assert np.all(np.isfinite(lp))


def test_reported_density_matches_histogram():
    cfg = SacConfig(state_dim=1, action_dim=1, hidden=(4,), action_low=(-0.5,), action_high=(1.5,))
    nets = SacNets.create(cfg, np.random.default_rng(0))
    _constant(nets.policy, 0.0)
    nets.policy.biases[-1][0] = 0.4  # mean before squashing
    nets.policy.biases[-1][1] = 0.2  # raw log-std, mapped into the allowed range
    rng = np.random.default_rng(1)
    n = 200_000
    a, _ = sample_action(nets.policy, np.zeros((n, 1)), cfg, "stochastic", rng)
    out = nets.policy.forward(np.zeros(1))
    mean, log_std = out[:1], out[1:]
    # predicted bin masses: integrate the reported density over action space
    edges = np.linspace(-0.5, 1.5, 41)
    counts, _ = np.histogram(a[:, 0], edges)
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        xs = np.linspace(lo, hi, 201)[1:-1]
        u = np.arctanh((xs - cfg.centre[0]) / cfg.scale[0])
        dens = np.exp(gaussian_log_prob(u[:, None], mean, log_std, cfg))
        mass = float(np.mean(dens) * (hi - lo))
        sigma = math.sqrt(n * max(mass, 1e-6) * (1 - mass))
        assert abs(c - n * mass) <= 5 * sigma + 3, (lo, c, n * mass)


# ---------------------------------------------------------------- replay


def test_replay_sampling_is_uniform():
    n_items, draws = 50, 1_000_000
    buf = ReplayBuffer(n_items, 2, 1)
    for i in range(n_items):
        buf.add(np.zeros(2), [0.0], 0.0, np.zeros(2), False)
    idx = buf.sample_indices(draws, np.random.default_rng(3))
    freq = np.bincount(idx, minlength=n_items)
    p = 1.0 / n_items
    sigma = math.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(freq - draws * p) <= 5 * sigma)


# ---------------------------------------------------------------- training

TINY = LocoTrainConfig(episode_steps=30, warmup_steps=100, eval_every=150, eval_episodes=2, buffer_size=1000)


def test_zero_budget_returns_initial_policy(tmp_path):
    res = train_locomotion(TINY, 0, seed=3, curve_path=tmp_path / "c.csv")
    fresh = SacNets.create(TINY.sac, np.random.default_rng(3))
    assert res.curve == []
    for p, q in zip(res.policy.params(), fresh.policy.params()):
        np.testing.assert_array_equal(p, q)
    assert (tmp_path / "c.csv").read_text().strip() == "step,eval_return,success_rate"


def test_same_seed_same_curve(tmp_path):
    cfg = with_sac(TINY, batch_size=32)
    a = train_locomotion(cfg, 300, seed=5, curve_path=tmp_path / "a.csv")
    b = train_locomotion(cfg, 300, seed=5, curve_path=tmp_path / "b.csv")
    assert [r["step"] for r in a.curve] == [150, 300]
    assert a.curve == b.curve
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    for p, q in zip(a.policy.params(), b.policy.params()):
        np.testing.assert_array_equal(p, q)


@given(st.floats(-3, 3), st.floats(0.01, 50))
def test_rbf_is_symmetric(d, alpha):
    assert rbf_kernel(0.0, d, alpha) == rbf_kernel(0.0, -d, alpha)
