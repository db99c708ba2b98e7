import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgm.core import (EVENT_CHANNELS, OBJECT_CHANNELS, EpisodeLog, FactorisationSpec, Hierarchy, LevelCommand,
                      MidCommand, command_width, make_schedule, route_observation, run_hierarchy)
from hgm.errors import FactorisationViolation, NonIntegerRatio, UnknownChannel
from hgm.harness import load_config
from hgm.harness.stack import build_mid_low, default_spec, schedule_of, world_config
from hgm.loco import SacConfig, SacNets
from hgm.world import Simulator, reset_world


@pytest.mark.parametrize("freqs, ratios", [
    ((0.5, 25, 500), (50, 20)),
    ((1, 1, 1), (1, 1)),
    ((2, 10, 100), (5, 10)),
])
def test_make_schedule_ratios(freqs, ratios):
    s = make_schedule(*freqs)
    assert (s.ratio_mid_per_high, s.ratio_low_per_mid) == ratios


@pytest.mark.parametrize("freqs", [(0.5, 25, 510), (3, 10, 100), (0.7, 25, 500)])
def test_make_schedule_rejects_fractional_ratio(freqs):
    with pytest.raises(NonIntegerRatio):
        make_schedule(*freqs)


def test_make_schedule_rejects_bad_order_and_sign():
    with pytest.raises(ValueError):
        make_schedule(10, 5, 100)
    with pytest.raises(ValueError):
        make_schedule(0, 5, 100)


def test_command_widths():
    assert [command_width(t) for t in (1, 2, 3)] == [6, 2, 5]
    # full-scale widths: a3 in R9, R3 and R7
    assert [command_width(t, spatial_dim=3) for t in (1, 2, 3)] == [9, 3, 7]


def test_level_command_task_fields():
    cmd = LevelCommand(pelvis_target=np.zeros(2), left_hand_target=np.ones(2), right_hand_target=np.ones(2))
    cmd.check_task(1)
    with pytest.raises(ValueError):
        cmd.check_task(2)


def test_mid_command_limits():
    MidCommand(np.zeros(3)).check_limits(-np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        MidCommand(np.array([0.0, 2.0, 0.0])).check_limits(-np.ones(3), np.ones(3))


# ---------------------------------------------------------------- routing

FULL = {"door_open": np.array([1.0]), "pelvis_target": np.array([0.2, -0.1]), "gait_phase": np.array([1.0, 0.0]),
        "box_pos": np.array([2.0, 1.5]), "joint_pos": np.arange(8.0)}


def test_locomotion_routing_drops_door_flag():
    spec = FactorisationSpec({"loco": ("pelvis_target", "gait_phase")})
    out = route_observation(spec, "loco", FULL)
    assert "door_open" not in out
    np.testing.assert_array_equal(out.vector(), [0.2, -0.1, 1.0, 0.0])
    with pytest.raises(FactorisationViolation):
        out["door_open"]


def test_empty_allow_list_gives_empty_vector():
    out = route_observation(FactorisationSpec({"loco": ()}), "loco", FULL)
    assert len(out) == 0 and out.vector().shape == (0,)


def test_full_allow_list_is_identity():
    spec = FactorisationSpec({"x": tuple(FULL)})
    out = route_observation(spec, "x", FULL)
    np.testing.assert_array_equal(out.vector(), np.concatenate(list(FULL.values())))


def test_unknown_channel():
    with pytest.raises(UnknownChannel):
        route_observation(FactorisationSpec({"x": ("nope",)}), "x", FULL)


@given(st.lists(st.sampled_from(sorted(FULL)), unique=True))
def test_routing_is_a_projection(names):
    spec = FactorisationSpec({"x": tuple(names)})
    once = route_observation(spec, "x", FULL)
    twice = route_observation(spec, "x", once)
    assert list(once) == list(names)
    np.testing.assert_array_equal(once.vector(), twice.vector())


@pytest.mark.parametrize("level, channel", [("loco", "door_open"), ("loco", "box_pos"), ("high", "motor_current")])
def test_spec_validation_rejects_leaks(level, channel):
    with pytest.raises(FactorisationViolation):
        FactorisationSpec({level: ("gait_phase", channel)}).validate()


def test_default_specs_respect_factorisation():
    for task in (1, 2, 3):
        spec = default_spec(task)
        loco = set(spec.channels("loco"))
        assert not loco & (EVENT_CHANNELS | OBJECT_CHANNELS)


# ---------------------------------------------------------------- scheduler with stubs


class ClockSim:
    """Minimal simulator: one observable channel holding the tick count."""

    def __init__(self):
        self.tick = 0
        self.applied = []

    def observe(self, high_cmd=None, mid_cmd=None):
        return {"clock": np.array([float(self.tick)])}

    def step(self, current):
        self.applied.append(np.asarray(current).copy())
        self.tick += 1


class StubPlanner:
    def __init__(self):
        self.seen = []

    def act(self, obs, rng):
        self.seen.append(float(obs["clock"][0]))
        return LevelCommand(pelvis_target=rng.uniform(size=2))


class StubMid:
    def __init__(self):
        self.high_seen = []

    def act(self, loco_obs, manip_obs, command, rng):
        self.high_seen.append(command)
        return MidCommand(rng.uniform(size=2))


class StubLow:
    def __init__(self):
        self.mid_seen = []

    def act(self, obs, mid_cmd):
        self.mid_seen.append((mid_cmd.issued_at_tick, mid_cmd.joint_targets.copy()))
        return mid_cmd.joint_targets * 2.0


STUB_SPEC = FactorisationSpec({"high": ("clock",), "loco": ("clock",), "manip": (), "low": ("clock",)})


@given(st.sampled_from([(1, 1, 1), (1, 2, 4), (2, 10, 100), (1, 3, 6), (0.5, 2.5, 10)]), st.integers(0, 4))
def test_command_counts_per_level(freqs, k):
    sch = make_schedule(*freqs)
    log = run_hierarchy(sch, StubPlanner(), StubMid(), StubLow(), ClockSim(), k, 0, STUB_SPEC)
    r2, r1 = sch.ratio_mid_per_high, sch.ratio_low_per_mid
    assert (log.count("high"), log.count("mid"), log.count("low")) == (k, k * r2, k * r2 * r1)


def test_zero_order_hold_and_lag():
    sch = make_schedule(1, 4, 12)
    planner, mid, low, sim = StubPlanner(), StubMid(), StubLow(), ClockSim()
    log = run_hierarchy(sch, planner, mid, low, sim, 3, 7, STUB_SPEC)
    # planner sees the tick left by the previous low step
    assert planner.seen == [0.0, 12.0, 24.0]
    # the high command is held over its mid ticks
    for i in range(3):
        held = mid.high_seen[4 * i:4 * i + 4]
        assert all(c is held[0] for c in held)
    # every low tick in a mid period receives the same joint targets
    for i in range(12):
        block = low.mid_seen[3 * i:3 * i + 3]
        assert {t for t, _ in block} == {3 * i}
        for _, q in block[1:]:
            np.testing.assert_array_equal(q, block[0][1])
    ticks = [r["tick"] for r in log.records if r["level"] == "mid"]
    assert ticks == list(range(0, 36, 3))


def test_ordering_high_before_mid_before_low():
    log = run_hierarchy(make_schedule(1, 2, 4), StubPlanner(), StubMid(), StubLow(), ClockSim(), 1, 0, STUB_SPEC)
    assert [r["level"] for r in log.records[:4]] == ["high", "mid", "low", "low"]


def test_level_reading_outside_allow_list_raises():
    class Snoop(StubPlanner):
        def act(self, obs, rng):
            obs["door_open"]

    spec = FactorisationSpec({"high": ("clock",), "loco": (), "manip": (), "low": ()})
    with pytest.raises(FactorisationViolation):
        run_hierarchy(make_schedule(1, 1, 1), Snoop(), StubMid(), StubLow(), ClockSim(), 1, 0, spec)


# ---------------------------------------------------------------- real stack


class FixedPlanner:
    def __init__(self, world):
        self.target = world.q[0:2] + np.array([0.3, -0.2])

    def act(self, obs, rng):
        return LevelCommand(pelvis_target=self.target.copy())


@pytest.fixture(scope="module")
def stack():
    cfg = load_config()
    net = SacNets.create(SacConfig(), np.random.default_rng(0)).policy
    mid, low = build_mid_low(cfg, net, world_config(cfg))
    return cfg, mid, low


def _run(stack, n, keep_states=False):
    cfg, mid, low = stack
    mid.reset()
    world = reset_world(1, "nominal", 0, world_config(cfg))
    sim = Simulator(world)
    log = EpisodeLog(keep_states=keep_states)
    run_hierarchy(schedule_of(cfg), FixedPlanner(world), mid, low, sim, n, 0, default_spec(1), log=log)
    return sim, log


def test_one_high_tick_counts_on_real_stack(stack):
    sim, log = _run(stack, 1)
    assert (log.count("high"), log.count("mid"), log.count("low")) == (1, 50, 1000)
    assert sim.tick == 1000


def test_zero_high_ticks_leaves_world_unchanged(stack):
    cfg, mid, low = stack
    world = reset_world(1, "nominal", 0, world_config(cfg))
    before = world.vector().copy()
    sim = Simulator(world)
    log = run_hierarchy(schedule_of(cfg), FixedPlanner(world), mid, low, sim, 0, 0, default_spec(1))
    assert len(log) == 0 and list(log.lines()) == []
    np.testing.assert_array_equal(sim.world.vector(), before)


def test_rerun_gives_identical_log(stack):
    _, a = _run(stack, 1)
    _, b = _run(stack, 1)
    assert list(a.lines()) == list(b.lines())


def test_replay_of_logged_currents_reproduces_trajectory(stack):
    cfg, _, _ = stack
    sim, log = _run(stack, 1, keep_states=True)
    replay = Simulator(reset_world(1, "nominal", 0, world_config(cfg)))
    lows = [r for r in log.records if r["level"] == "low"]
    for rec, state in zip(lows, log.states):
        replay.step(np.array(rec["command"]))
        assert np.array_equal(replay.state_vector(), state)


def test_fast_path_matches_tick_by_tick(stack):
    cfg, mid, low = stack
    results = []
    for log in (None, EpisodeLog()):
        mid.reset()
        world = reset_world(1, "nominal", 0, world_config(cfg))
        sim = Simulator(world)
        Hierarchy(schedule_of(cfg), FixedPlanner(world), mid, low, sim, default_spec(1), log=log,
                  rng=np.random.default_rng(0)).run(1)
        results.append(sim.state_vector())
    np.testing.assert_array_equal(results[0], results[1])


def test_log_jsonl_fields(tmp_path, stack):
    _, log = _run(stack, 1)
    path = log.to_jsonl(tmp_path / "log.jsonl")
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"tick", "level", "command", "obs_hash"}
