import numpy as np
import pytest

from src.envs.episodes import (
    EpisodeTrace,
    read_trace_csv,
    run_episode,
    success,
    task_error,
    trace_observations,
    write_trace_csv,
)
from src.envs.references import (
    DEFAULT_FREQUENCY,
    RefParams,
    read_reference_csv,
    ref_generate,
    velocity_consistency_error,
    write_reference_csv,
)
from src.envs.roster import DEFAULT_SKILL, ROSTER, get_spec, get_task, load_spec, reference_for
from src.envs.suite import (
    DOOR_LATCH,
    EnvState,
    end_effector,
    limits,
    obs_dim,
    observe,
    reset,
    step,
)
from src.errors import ConfigError, InvalidActionError, UnknownSkillError
from src.numkit.rng import SeededRng


def _zero(spec):
    return lambda state: np.zeros(spec.action_dim)


def _hold_trace(spec, final_q):
    n = spec.episode_len
    q = np.zeros((n, spec.dof))
    q[-1] = final_q
    return EpisodeTrace(
        env=spec.name,
        t=np.arange(1, n + 1),
        q=q,
        qdot=np.zeros((n, spec.dof)),
        actions=np.zeros((n, spec.action_dim)),
        task_rewards=np.ones(n),
        fallen=np.zeros(n, dtype=bool),
        phase=np.zeros(n),
    )


class TestReset:
    def test_zero_noise_starts_at_rest_pose(self):
        for spec in ROSTER.values():
            s = reset(spec, SeededRng(0), noise=0.0)
            np.testing.assert_array_equal(s.q, spec.rest_pose)
            np.testing.assert_array_equal(s.qdot, np.zeros(spec.dof))
            assert s.t == 0

    def test_same_seed_same_state(self):
        spec = get_spec("cart-carry")
        a, b = reset(spec, SeededRng(3)), reset(spec, SeededRng(3))
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.qdot, b.qdot)

    def test_thousand_resets_stay_within_limits(self):
        rng = SeededRng(1)
        for spec in ROSTER.values():
            lo, hi = limits(spec.joint_limits)
            for i in range(200):
                s = reset(spec, rng.spawn(spec.name, i), noise=0.5)
                assert np.all(s.q >= lo) and np.all(s.q <= hi)


class TestStep:
    def test_point_mass_at_rest_is_an_equilibrium(self):
        spec = get_spec("point-mass-stand")
        s = reset(spec, SeededRng(0), noise=0.0)
        out = step(spec, s, np.zeros(2))
        np.testing.assert_array_equal(out.next.q, s.q)
        np.testing.assert_array_equal(out.next.qdot, s.qdot)
        assert out.next.t == 1

    def test_constant_force_matches_discrete_double_integrator(self):
        spec = get_spec("point-mass-stand").model_copy(update={"damping": 0.0})
        s = reset(spec, SeededRng(0), noise=0.0)
        u = np.array([1.0, -0.5])
        n = 20
        for _ in range(n):
            s = step(spec, s, u).next
        dt = spec.dt
        np.testing.assert_allclose(s.qdot, n * dt * u, atol=1e-13)
        np.testing.assert_allclose(s.q, dt * dt * u * n * (n + 1) / 2, atol=1e-13)

    def test_action_beyond_limits_equals_clipped_action(self):
        spec = get_spec("point-mass-walk")
        s = reset(spec, SeededRng(2))
        wild = step(spec, s, np.array([1e6, -1e6]))
        clipped = step(spec, s, np.array([15.0, -15.0]))
        np.testing.assert_array_equal(wild.next.q, clipped.next.q)
        np.testing.assert_array_equal(wild.next.qdot, clipped.next.qdot)

    def test_non_finite_action_is_rejected(self):
        spec = get_spec("point-mass-stand")
        with pytest.raises(InvalidActionError):
            step(spec, reset(spec, SeededRng(0)), np.array([np.nan, 0.0]))

    def test_dynamics_are_deterministic(self):
        spec = get_spec("cart-carry")
        s = reset(spec, SeededRng(4))
        a, b = step(spec, s, np.array([3.0, 1.0])), step(spec, s, np.array([3.0, 1.0]))
        np.testing.assert_array_equal(a.next.q, b.next.q)
        assert a.task_reward == b.task_reward

    def test_phase_follows_period(self):
        spec = get_spec("point-mass-run")
        s = reset(spec, SeededRng(0), noise=0.0)
        for _ in range(25):
            s = step(spec, s, np.zeros(2)).next
        assert s.phase == pytest.approx((25 * spec.dt / spec.period) % 1.0)

    def test_leaving_bounds_is_a_fall_and_ends_the_episode(self):
        spec = get_spec("point-mass-stand")
        s = EnvState(q=np.array([1.99, 0.0]), qdot=np.array([5.0, 0.0]), t=3, phase=0.0)
        out = step(spec, s, np.zeros(2))
        assert out.fallen and out.done

    def test_episode_ends_at_horizon(self):
        spec = get_spec("two-link-arm")
        trace = run_episode(spec, _zero(spec), SeededRng(0), noise=0.0)
        assert len(trace) == spec.episode_len
        assert trace.t[-1] == spec.episode_len


class TestDoor:
    def test_latch_ignores_force_away_from_handle(self):
        spec = get_spec("composite-door")
        s = reset(spec, SeededRng(0), noise=0.0)
        out = step(spec, s, np.array([0.0, 0.0, 15.0]))
        assert out.next.q[DOOR_LATCH] == 0.0

    def test_latch_opens_at_handle(self):
        spec = get_spec("composite-door")
        s = EnvState(q=np.array([2.0, 0.0, 0.0]), qdot=np.zeros(3), t=0, phase=0.0)
        for _ in range(50):
            s = step(spec, s, np.array([0.0, 0.0, 15.0])).next
        assert s.q[DOOR_LATCH] == 1.0
        assert task_error(spec, s.q, s.qdot) == 0.0

    def test_composite_task_uses_three_skills(self):
        task = get_task("door")
        assert task.env == "composite-door"
        assert len(set(task.skills)) >= 2


class TestObservation:
    def test_layout(self):
        spec = get_spec("cart-carry")
        s = EnvState(q=np.array([1.0, 0.1]), qdot=np.array([0.5, -0.2]), t=0, phase=0.25)
        obs = observe(spec, s)
        assert obs.shape == (obs_dim(spec),)
        np.testing.assert_allclose(obs, [1.0, 0.1, 0.5, -0.2, 1.0, 0.0], atol=1e-15)

    def test_trace_observations_use_post_step_states(self):
        spec = get_spec("point-mass-walk")
        trace = run_episode(spec, _zero(spec), SeededRng(1), max_steps=5)
        obs = trace_observations(spec, trace)
        assert obs.shape == (5, obs_dim(spec))
        np.testing.assert_array_equal(obs[:, :2], trace.q)


class TestSuccess:
    def test_stand_holding_rest_pose_succeeds(self):
        spec = get_spec("point-mass-stand")
        trace = run_episode(spec, _zero(spec), SeededRng(0), noise=0.0)
        assert success(spec, trace)

    def test_any_fall_fails(self):
        spec = get_spec("point-mass-stand")
        trace = _hold_trace(spec, [0.0, 0.0])
        trace.fallen[10] = True
        assert not success(spec, trace)

    def test_error_exactly_at_threshold_fails(self):
        spec = get_spec("point-mass-stand")
        assert not success(spec, _hold_trace(spec, [spec.success_threshold, 0.0]))
        assert success(spec, _hold_trace(spec, [0.999 * spec.success_threshold, 0.0]))

    def test_truncated_episode_fails(self):
        spec = get_spec("point-mass-stand")
        trace = run_episode(spec, _zero(spec), SeededRng(0), noise=0.0, max_steps=100)
        assert not success(spec, trace)

    def test_reach_measures_end_effector_distance(self):
        spec = get_spec("two-link-arm")
        goal = np.asarray(spec.goal)
        assert task_error(spec, goal, np.zeros(2)) == 0.0
        q = np.array([0.0, 0.0])
        expected = np.linalg.norm(end_effector(spec, q) - end_effector(spec, goal))
        assert task_error(spec, q, np.zeros(2)) == pytest.approx(expected)


class TestReferences:
    def test_stand_is_constant_rest_pose(self):
        ref = ref_generate("stand", 3, 0.02, {"rest": [0.1, -0.2, 0.3], "period": 2.0})
        np.testing.assert_array_equal(ref.q, np.tile([0.1, -0.2, 0.3], (ref.frame_count, 1)))
        np.testing.assert_array_equal(ref.qdot, 0.0)

    def test_frame_count_is_period_over_dt(self):
        ref = ref_generate("walk", 2, 0.02, {"period": 2.0})
        assert ref.frame_count == 100

    def test_walk_with_zero_amplitude_equals_stand(self):
        walk = ref_generate("walk", 2, 0.02, {"amplitude": 0.0, "period": 2.0})
        stand = ref_generate("stand", 2, 0.02, {"period": 2.0})
        np.testing.assert_array_equal(walk.q, stand.q)
        np.testing.assert_array_equal(walk.qdot, stand.qdot)

    def test_walk_velocity_is_the_analytic_derivative(self):
        amp, freq, dt = 0.3, 0.5, 0.02
        ref = ref_generate("walk", 2, dt, {"amplitude": amp, "frequency": freq, "period": 2.0})
        t = np.arange(ref.frame_count) * dt
        omega = 2 * np.pi * freq
        offsets = np.array([0.0, np.pi / 2])
        expected = amp * omega * np.cos(omega * t[:, None] + offsets)
        np.testing.assert_allclose(ref.qdot, expected, atol=1e-9)

    def test_walk_positions_stay_within_first_order_of_the_curve(self):
        amp, freq, dt = 0.3, 0.5, 0.02
        ref = ref_generate("walk", 2, dt, {"amplitude": amp, "frequency": freq, "period": 2.0})
        t = np.arange(ref.frame_count) * dt
        omega = 2 * np.pi * freq
        offsets = np.array([0.0, np.pi / 2])
        expected = amp * np.sin(omega * t[:, None] + offsets)
        np.testing.assert_allclose(ref.q, expected, atol=2 * amp * omega * dt)

    @pytest.mark.parametrize("skill", ["stand", "walk", "run", "reach", "sit", "carry", "crawl"])
    def test_velocities_are_forward_differences(self, skill):
        ref = ref_generate(skill, 3, 0.02, {"period": 2.0})
        assert velocity_consistency_error(ref) < 1e-6

    @pytest.mark.parametrize("name", ["point-mass-walk", "point-mass-run", "two-link-arm"])
    def test_roster_references_are_velocity_consistent(self, name):
        ref = reference_for(get_spec(name), DEFAULT_SKILL[name])
        assert velocity_consistency_error(ref) < 1e-6

    def test_run_is_faster_than_walk(self):
        assert DEFAULT_FREQUENCY["run"] > DEFAULT_FREQUENCY["walk"]

    def test_reach_goes_from_start_to_goal_with_zero_end_velocity(self):
        params = RefParams(start=[0.0, 0.0], goal=[1.0, -1.0], travel_time=1.0, period=2.0)
        ref = ref_generate("reach", 2, 0.02, params)
        np.testing.assert_array_equal(ref.q[0], [0.0, 0.0])
        np.testing.assert_allclose(ref.q[-1], [1.0, -1.0], atol=1e-6)
        np.testing.assert_allclose(ref.qdot[-1], 0.0, atol=1e-12)

    @pytest.mark.parametrize("skill", ["sit", "carry", "crawl"])
    def test_keyframe_skills_start_at_rest(self, skill):
        ref = ref_generate(skill, 2, 0.02, {"period": 4.0})
        np.testing.assert_allclose(ref.q[0], 0.0, atol=1e-12)
        assert np.all(np.isfinite(ref.qdot))

    def test_unknown_skill_raises(self):
        with pytest.raises(UnknownSkillError):
            ref_generate("backflip", 2, 0.02)

    def test_roster_references_fit_their_envs(self):
        for name, spec in ROSTER.items():
            if name == "composite-door":
                continue
            ref = reference_for(spec, DEFAULT_SKILL[name])
            assert ref.dof == spec.dof
            lo, hi = limits(spec.joint_limits)
            assert np.all(ref.q >= lo) and np.all(ref.q <= hi)

    def test_reference_csv_preserves_frames(self, tmp_path):
        ref = reference_for(get_spec("point-mass-walk"), "walk")
        path = tmp_path / "walk.csv"
        write_reference_csv(ref, path)
        assert path.read_text().startswith("# schema_version=1")
        back = read_reference_csv(path)
        assert back.skill == "walk" and back.period == ref.period and back.dt == ref.dt
        np.testing.assert_array_equal(back.q, ref.q)
        np.testing.assert_array_equal(back.qdot, ref.qdot)


class TestRoster:
    def test_unknown_env_is_a_config_error(self):
        with pytest.raises(ConfigError):
            get_spec("humanoid")

    def test_spec_loads_from_json(self, tmp_path):
        path = tmp_path / "env.json"
        path.write_text(get_spec("seat-dock").model_dump_json())
        assert load_spec(path) == get_spec("seat-dock")

    def test_malformed_spec_is_a_config_error(self, tmp_path):
        path = tmp_path / "env.json"
        path.write_text('{"name": "x", "kind": "point-mass", "dof": 2}')
        with pytest.raises(ConfigError):
            load_spec(path)


class TestTraceCsv:
    def test_trace_with_extras_survives_csv(self, tmp_path):
        spec = get_spec("cart-carry")
        trace = run_episode(
            spec,
            lambda s: np.array([1.0, 0.0]),
            SeededRng(0),
            max_steps=7,
            annotate=lambda s, a, r: {"label": 1.0},
        )
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        assert back.env == spec.name
        np.testing.assert_array_equal(back.q, trace.q)
        np.testing.assert_array_equal(back.task_rewards, trace.task_rewards)
        np.testing.assert_array_equal(back.extra("label"), np.ones(7))
