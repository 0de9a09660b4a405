import numpy as np
import pytest

from guided_ddpg.envs import (
    EnvState,
    InsertionEnvConfig,
    contact_force,
    cost,
    env_reset,
    env_step,
    load_env_config,
    rollout,
    success,
    write_rollout_csv,
)
from guided_ddpg.exceptions import ConfigurationError, InputError


@pytest.fixture
def config():
    return InsertionEnvConfig()


def free_space_state(x=0.0, y=0.01, vx=0.0, vy=0.0):
    return EnvState(np.array([x, y]), np.array([vx, vy]), np.zeros(2))


class TestConfig:
    def test_defaults_valid(self, config):
        assert config.clearance >= 0.0
        assert config.success_tolerance == pytest.approx(0.05 * config.hole_depth)
        assert tuple(config.target) == (config.hole_center_offset, -config.hole_depth)

    def test_clearance_invariant(self):
        with pytest.raises(ConfigurationError):
            InsertionEnvConfig(peg_half_width=0.006, hole_half_width=0.005)

    def test_target_follows_offset(self):
        cfg = InsertionEnvConfig(hole_center_offset=0.0011)
        assert cfg.target[0] == pytest.approx(0.0011)

    @pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(horizon=0), dict(wall_stiffness=0.0)])
    def test_bad_numbers_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            InsertionEnvConfig(**kwargs)


class TestReset:
    def test_fixed_seed_repeats(self, config):
        a = env_reset(config, 42)
        b = env_reset(config, 42)
        assert np.array_equal(a.as_vector(), b.as_vector())

    def test_zero_range_is_nominal(self):
        cfg = InsertionEnvConfig(reset_range=0.0)
        state = env_reset(cfg, 3)
        assert np.array_equal(state.position, [0.0, cfg.start_height])

    def test_lateral_offset_within_bound(self, config):
        for seed in range(1, 200):
            state = env_reset(config, seed)
            assert abs(state.position[0]) <= config.reset_range
            assert state.position[1] == config.start_height
            assert np.all(state.velocity == 0.0)
            assert np.all(state.contact_force == 0.0)


class TestContact:
    def test_free_space_no_force(self, config):
        assert np.all(contact_force(config, np.array([0.0, 0.01]), np.zeros(2)) == 0.0)
        assert np.all(contact_force(config, np.array([0.0, -0.01]), np.zeros(2)) == 0.0)

    def test_right_wall_spring(self, config):
        # peg deep in the hole, overlapping the right wall by delta, at rest
        delta = 2e-4
        x = config.hole_half_width - config.peg_half_width + delta
        pos = np.array([x, -0.01])
        force = contact_force(config, pos, np.zeros(2))
        assert force[0] == pytest.approx(-config.wall_stiffness * delta)
        assert force[1] == 0.0

    def test_left_wall_spring(self, config):
        delta = 2e-4
        x = -(config.hole_half_width - config.peg_half_width + delta)
        force = contact_force(config, np.array([x, -0.01]), np.zeros(2))
        assert force[0] == pytest.approx(config.wall_stiffness * delta)

    def test_table_supports_misaligned_peg(self, config):
        # peg resting on the table beside the hole: pushed up, not sideways
        pen = 3e-4
        force = contact_force(config, np.array([0.012, -pen]), np.zeros(2))
        assert force[0] == 0.0
        assert force[1] == pytest.approx(config.wall_stiffness * pen)

    def test_hole_floor(self, config):
        pen = 1e-4
        force = contact_force(config, np.array([0.0, -config.hole_depth - pen]), np.zeros(2))
        assert force[1] == pytest.approx(config.wall_stiffness * pen)

    def test_force_continuous_in_penetration(self, config):
        # magnitude grows linearly from zero with penetration depth (at rest)
        inside = config.hole_half_width - config.peg_half_width
        depths = np.linspace(0.0, 3e-4, 7)
        forces = [contact_force(config, np.array([inside + d, -0.01]), np.zeros(2))[0] for d in depths]
        assert forces[0] == 0.0
        diffs = np.diff(forces)
        assert np.allclose(diffs, diffs[0])

    def test_no_adhesion(self, config):
        # peg separating fast: damping cannot turn contact into suction
        inside = config.hole_half_width - config.peg_half_width
        force = contact_force(config, np.array([inside + 1e-5, -0.01]), np.array([-10.0, 0.0]))
        assert force[0] >= 0.0


class TestStep:
    def test_free_space_zero_action_is_static(self, config):
        state = free_space_state()
        tr = env_step(config, state, np.zeros(2))
        assert np.array_equal(tr.next_state[0:2], state.position)
        assert np.all(tr.next_state[4:6] == 0.0)

    def test_constant_force_integration_oracle(self, config):
        # semi-implicit Euler: after n steps, v = n*dt*F/m exactly
        state = free_space_state(y=0.015)
        force = np.array([0.0, -0.5])
        n = 17
        for _ in range(n):
            tr = env_step(config, state, force)
            state = EnvState.from_vector(tr.next_state)
        expected_v = n * config.dt * force[1] / config.mass
        assert state.velocity[1] == pytest.approx(expected_v, rel=1e-12)

    def test_kinetic_energy_constant_without_contact(self, config):
        state = free_space_state(x=0.0, y=0.012, vx=0.01, vy=0.005)
        e0 = 0.5 * config.mass * np.sum(state.velocity**2)
        for _ in range(25):
            tr = env_step(config, state, np.zeros(2))
            state = EnvState.from_vector(tr.next_state)
            assert 0.5 * config.mass * np.sum(state.velocity**2) == pytest.approx(e0, rel=1e-12)

    def test_action_clipped(self, config):
        tr = env_step(config, free_space_state(), np.array([100.0, -100.0]))
        assert np.all(np.abs(tr.action) <= config.action_bound)

    def test_nonfinite_action_rejected(self, config):
        with pytest.raises(InputError):
            env_step(config, free_space_state(), np.array([np.nan, 0.0]))

    def test_reward_is_negative_cost(self, config):
        state = free_space_state(x=0.001)
        tr = env_step(config, state, np.array([0.5, -0.5]))
        assert tr.reward == pytest.approx(-cost(state.as_vector(), tr.action, config))
        assert tr.reward <= 0.0

    def test_trajectory_deterministic(self, config):
        actions = np.random.default_rng(0).uniform(-1, 1, size=(30, 2))

        def run():
            state = env_reset(config, 9)
            trace = []
            for a in actions:
                tr = env_step(config, state, a)
                state = EnvState.from_vector(tr.next_state)
                trace.append(tr.next_state)
            return np.array(trace)

        assert np.array_equal(run(), run())


class TestCost:
    def test_zero_at_target_with_zero_action(self, config):
        state = np.array([config.target[0], config.target[1], 0, 0, 0, 0])
        assert cost(state, np.zeros(2), config) == 0.0

    def test_unit_distance(self, config):
        state = np.array([config.target[0], config.target[1] + 1.0, 0, 0, 0, 0])
        assert cost(state, np.zeros(2), config) == pytest.approx(1.0)

    def test_action_norm_weighting(self, config):
        state = np.array([config.target[0], config.target[1], 0, 0, 0, 0])
        assert cost(state, np.array([3.0, 4.0]), config) == pytest.approx(5e-4)


class TestSuccess:
    def test_true_at_target(self, config):
        state = EnvState(config.target.copy(), np.zeros(2), np.zeros(2))
        assert success(state, config)

    def test_false_above_plane(self, config):
        state = EnvState(np.array([0.0, 0.001]), np.zeros(2), np.zeros(2))
        assert not success(state, config)

    def test_true_within_tolerance_inside_hole(self, config):
        pos = config.target + np.array([0.0, 0.04 * config.hole_depth])
        state = EnvState(pos, np.zeros(2), np.zeros(2))
        assert success(state, config)

    def test_false_when_laterally_outside(self):
        cfg = InsertionEnvConfig(success_tolerance=0.05)
        pos = cfg.target + np.array([0.004, 0.001])
        state = EnvState(pos, np.zeros(2), np.zeros(2))
        assert not success(state, cfg)


class TestRollout:
    def test_full_horizon_when_not_stopping(self, config):
        roll = rollout(config, lambda t, s: np.zeros(2), 1, stop_on_success=False)
        assert roll.steps == config.horizon
        assert roll.states.shape == (config.horizon + 1, 6)
        assert roll.dones[-1]

    def test_csv_export(self, tmp_path, config):
        roll = rollout(config, lambda t, s: np.array([0.1, -0.2]), 2, stop_on_success=False)
        path = tmp_path / "traj.csv"
        write_rollout_csv(roll, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",")[:3] == ["t", "px", "py"]
        assert len(lines) == roll.steps + 1


class TestConfigFile:
    def test_load_roundtrip(self, tmp_path):
        path = tmp_path / "env.cfg"
        path.write_text(
            "# insertion geometry (SI units)\n"
            "peg_half_width = 0.004\n"
            "hole_half_width = 0.0045\n"
            "horizon = 80\n"
        )
        cfg = load_env_config(path)
        assert cfg.peg_half_width == 0.004
        assert cfg.horizon == 80

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "env.cfg"
        path.write_text("gravity = 9.81\n")
        with pytest.raises(ConfigurationError):
            load_env_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "env.cfg"
        path.write_text("mass = heavy\n")
        with pytest.raises(ConfigurationError):
            load_env_config(path)
