import json

import numpy as np
import pytest

from guided_ddpg.cli import main as cli_main
from guided_ddpg.exceptions import SpecError
from guided_ddpg.harness import (
    adaptability_sweep,
    compare_runs,
    load_agent_checkpoint,
    parse_spec,
    pure_ddpg_config,
    run_experiment,
    save_agent_checkpoint,
)
from guided_ddpg.ddpg import DdpgHyper, make_agent, policy_action
from guided_ddpg.envs import InsertionEnvConfig
from guided_ddpg.nets import params_to_vector

TINY_SPEC = """
# tiny smoke-test experiment
algorithm = guided_ddpg
seeds = 0,1
eval_episodes = 2

epochs = 1
n_ddpg = 2
n_inc = 0
n_trajopt = 1
samples_per_subiter = 3
eval_every = 2
train_eval_episodes = 2
kl_step = 20.0
r2_capacity = 500

horizon = 6
actor_hidden = 8
critic_hidden = 8
batch_size = 8
supervision_batch_size = 8
supervision_decay = 5.0

sweep_clearances = 0.0005,0.0002
sweep_hole_offsets = 0.0,0.0005
"""


@pytest.fixture
def tiny_spec_path(tmp_path):
    path = tmp_path / "tiny.spec"
    path.write_text(TINY_SPEC)
    return path


class TestSpecParsing:
    def test_parses_sections(self, tiny_spec_path):
        spec = parse_spec(tiny_spec_path)
        assert spec.algorithm == "guided_ddpg"
        assert spec.seeds == (0, 1)
        assert spec.train.env.horizon == 6
        assert spec.train.hyper.batch_size == 8
        assert spec.train.supervisor.samples_per_subiter == 3
        assert spec.sweep_clearances == (0.0005, 0.0002)

    def test_unknown_key_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.spec"
        path.write_text("algorithm = guided_ddpg\nseeds = 0\nwarp_speed = 9\n")
        with pytest.raises(SpecError, match="warp_speed"):
            parse_spec(path)

    def test_missing_required_keys(self, tmp_path):
        path = tmp_path / "bad.spec"
        path.write_text("epochs = 3\n")
        with pytest.raises(SpecError, match="algorithm"):
            parse_spec(path)

    def test_bad_value_reported_with_line(self, tmp_path):
        path = tmp_path / "bad.spec"
        path.write_text("algorithm = guided_ddpg\nseeds = 0\nepochs = many\n")
        with pytest.raises(SpecError, match="line 3"):
            parse_spec(path)

    def test_bad_algorithm(self, tmp_path):
        path = tmp_path / "bad.spec"
        path.write_text("algorithm = sarsa\nseeds = 0\n")
        with pytest.raises(SpecError):
            parse_spec(path)


class TestPureDdpgTransform:
    def test_strips_supervision(self, tiny_spec_path):
        spec = parse_spec(tiny_spec_path)
        pure = pure_ddpg_config(spec.train)
        assert pure.n_trajopt == 0
        assert pure.hyper.supervision_decay == 0.0
        assert pure.epochs == spec.train.epochs


class TestRunExperiment:
    def test_artifacts_created(self, tiny_spec_path, tmp_path):
        out = run_experiment(tiny_spec_path, tmp_path / "run")
        for seed in (0, 1):
            seed_dir = out / f"seed_{seed}"
            assert (seed_dir / "training_log.csv").exists()
            assert (seed_dir / "timings.csv").exists()
            assert (seed_dir / "checkpoint.json").exists()
            summary = json.loads((seed_dir / "summary.json").read_text())
            assert summary["algorithm"] == "guided_ddpg"
            assert summary["episodes_total"] > 0
        assert (out / "learning_curves.csv").exists()
        assert (out / "aggregate.json").exists()
        assert (out / "comparison_table.csv").exists()

    def test_empty_run_is_valid(self, tmp_path):
        path = tmp_path / "empty.spec"
        path.write_text("algorithm = pure_ddpg\nseeds = 0\nepochs = 0\nhorizon = 5\n")
        out = run_experiment(path, tmp_path / "run")
        summary = json.loads((out / "seed_0" / "summary.json").read_text())
        assert summary["episodes_total"] == 0

    def test_determinism_byte_identical_csv(self, tiny_spec_path, tmp_path):
        out_a = run_experiment(tiny_spec_path, tmp_path / "a")
        out_b = run_experiment(tiny_spec_path, tmp_path / "b")
        for seed in (0, 1):
            csv_a = (out_a / f"seed_{seed}" / "training_log.csv").read_bytes()
            csv_b = (out_b / f"seed_{seed}" / "training_log.csv").read_bytes()
            assert csv_a == csv_b
        assert (out_a / "learning_curves.csv").read_bytes() == (out_b / "learning_curves.csv").read_bytes()

    def test_compare_runs(self, tiny_spec_path, tmp_path):
        out_a = run_experiment(tiny_spec_path, tmp_path / "a")
        out_b = run_experiment(tiny_spec_path, tmp_path / "b")
        result = compare_runs(out_a, out_b, tmp_path / "comparison.csv")
        assert (tmp_path / "comparison.csv").exists()
        assert len(result["runs"]) == 2


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        env = InsertionEnvConfig()
        hyper = DdpgHyper.for_env(env, actor_hidden=(8,), critic_hidden=(8,))
        nets = make_agent(hyper, 3)
        path = tmp_path / "ckpt.json"
        save_agent_checkpoint(path, nets, hyper)
        actor, loaded_hyper = load_agent_checkpoint(path)
        assert np.array_equal(params_to_vector(actor), params_to_vector(nets.actor))
        assert loaded_hyper.action_bound == hyper.action_bound
        states = np.random.default_rng(0).normal(size=(4, 6)) * 0.01
        assert np.allclose(policy_action(actor, loaded_hyper, states),
                           policy_action(nets.actor, hyper, states))


class TestSweep:
    def test_grid_evaluated(self, tmp_path):
        env = InsertionEnvConfig(horizon=6)
        hyper = DdpgHyper.for_env(env, actor_hidden=(8,), critic_hidden=(8,))
        nets = make_agent(hyper, 0)
        ckpt = tmp_path / "ckpt.json"
        save_agent_checkpoint(ckpt, nets, hyper)
        rows = adaptability_sweep(ckpt, env, (0.0005, 0.0001), (0.0, 0.0005), 2, 0,
                                  tmp_path / "sweep.csv")
        assert len(rows) == 4
        lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("clearance_m,hole_offset_m,success_rate")


class TestCli:
    def test_train_and_eval_and_sweep(self, tiny_spec_path, tmp_path, capsys):
        out = tmp_path / "run"
        assert cli_main(["train", "--spec", str(tiny_spec_path), "--out", str(out)]) == 0
        ckpt = out / "seed_0" / "checkpoint.json"
        capsys.readouterr()  # discard the train command's status line

        assert cli_main(["eval", "--checkpoint", str(ckpt), "--episodes", "2"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert 0.0 <= result["success_rate"] <= 1.0

        assert cli_main(["sweep", "--checkpoint", str(ckpt), "--spec", str(tiny_spec_path),
                         "--out", str(tmp_path / "sweep")]) == 0
        assert (tmp_path / "sweep" / "sweep.csv").exists()

        assert cli_main(["compare", "--run-a", str(out), "--run-b", str(out),
                         "--out", str(tmp_path / "cmp")]) == 0
        assert (tmp_path / "cmp" / "comparison.csv").exists()

    def test_bad_spec_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.spec"
        path.write_text("algorithm = nonsense\nseeds = 0\n")
        assert cli_main(["train", "--spec", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_missing_checkpoint_exit_code(self, tmp_path):
        code = cli_main(["eval", "--checkpoint", str(tmp_path / "nope.json")])
        assert code == 1
