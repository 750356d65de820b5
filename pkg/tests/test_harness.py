import json
from pathlib import Path

import numpy as np
import pytest

import src.harness.experiment as experiment
from src.envs.episodes import read_trace_csv, run_episode, trace_observations
from src.envs.references import RefTrajectory, ref_generate, write_reference_csv
from src.envs.roster import get_spec
from src.errors import ConfigError, PrerequisiteError
from src.experts.control import ExpertController
from src.experts.persistence import load_expert
from src.experts.training import train_expert
from src.harness.artifacts import (
    read_curve_csv,
    read_summary,
    reference_path,
    rejections_path,
    write_rejections,
)
from src.harness.experiment import (
    ablate,
    baseline_controller,
    eval_points,
    kept_references,
    run_experiment,
)
from src.harness.metrics import success_rate
from src.harness.stages import distil_router, retarget_clips
from src.main import apply_overrides, build_parser, load_config, main
from src.models.documents import RejectionEntry, RejectionReport
from src.models.experiment import ExperimentConfig
from src.numkit.rng import SeededRng
from src.settings import Settings

SKILLS = ("stand", "walk", "reach")


def _short_spec(tmp_path: Path, name: str = "composite-door", episode_len: int = 40) -> str:
    spec = get_spec(name).model_copy(update={"episode_len": episode_len})
    path = tmp_path / f"{name}.json"
    path.write_text(spec.model_dump_json(), encoding="utf-8")
    return str(path)


def _tiny(tmp_path: Path, **overrides) -> ExperimentConfig:
    data = {
        "env": _short_spec(tmp_path),
        "task": "door",
        "seeds": [0],
        "budget": 20,
        "eval_interval": 10,
        "eval_episodes": 1,
        "success_trials": 2,
        "expert": {
            "hidden": [8],
            "latent_dim": 4,
            "warmup_steps": 5,
            "batch_size": 8,
            "eval_episodes": 1,
            "planner": {"horizon": 3, "n_samples": 16, "n_elites": 4, "n_iters": 1},
        },
        "router": {
            "hidden": [8],
            "steps": 6,
            "batch_size": 8,
            "eval_interval": 3,
            "rollout_refresh": 3,
            "n_demos": 1,
        },
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


class TestEvalPoints:
    def test_regular_grid_ends_at_the_budget(self):
        assert eval_points(40, 20) == [0, 20, 40]

    def test_uneven_budget_appends_the_last_step(self):
        assert eval_points(45, 20) == [0, 20, 40, 45]

    def test_zero_budget_evaluates_once(self):
        assert eval_points(0, 10) == [0]


class TestCompositeRun:
    def test_writes_the_run_layout(self, tmp_path):
        out = tmp_path / "run"
        result = run_experiment(_tiny(tmp_path), out)
        assert (out / "manifest.json").exists()
        assert (out / "curve.csv").exists()
        assert read_summary(out / "summary.json") == result.record
        seed_dir = out / "seed_0"
        for skill in SKILLS:
            assert (seed_dir / "checkpoints" / f"{skill}.json").exists()
            assert (seed_dir / "experts" / f"{skill}.csv").exists()
        assert (seed_dir / "checkpoints" / "router.json").exists()
        assert (seed_dir / "checkpoints" / "oracle.json").exists()
        assert sorted(p.name for p in (seed_dir / "trials").iterdir()) == [
            "trial_00.csv",
            "trial_01.csv",
        ]
        assert result.record.trials == 2
        assert result.record.env == "composite-door"

    def test_curve_counts_steps_across_experts(self, tmp_path):
        out = tmp_path / "run"
        run_experiment(_tiny(tmp_path), out)
        assert [p.step for p in read_curve_csv(out / "curve.csv")] == [0, 30, 60]

    def test_same_seed_gives_identical_files(self, tmp_path):
        config = _tiny(tmp_path)
        run_experiment(config, tmp_path / "a")
        run_experiment(config, tmp_path / "b")
        names = [
            "curve.csv",
            "seed_0/curve.csv",
            "seed_0/trials/trial_00.csv",
            "seed_0/trials/trial_01.csv",
        ]
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_curves_are_aggregated(self, tmp_path):
        result = run_experiment(_tiny(tmp_path, seeds=[0, 1]), tmp_path / "run")
        curve = read_curve_csv(tmp_path / "run" / "curve.csv")
        assert all(p.n_seeds == 2 for p in curve)
        assert result.record.trials == 4
        assert set(result.seed_peaks()) == {0, 1}

    def test_evaluation_only_needs_checkpoints(self, tmp_path):
        with pytest.raises(PrerequisiteError):
            run_experiment(_tiny(tmp_path, budget=0), tmp_path / "eval")

    def test_evaluation_only_reuses_trained_checkpoints(self, tmp_path):
        run_experiment(_tiny(tmp_path), tmp_path / "train")
        ckpt = tmp_path / "train" / "seed_0" / "checkpoints"
        out = tmp_path / "eval"
        result = run_experiment(_tiny(tmp_path, budget=0, checkpoint_dir=str(ckpt)), out)
        assert result.runs[0].steps == [0]
        assert not (out / "curve.csv").exists()
        assert not (out / "seed_0" / "checkpoints").exists()
        assert (out / "summary.json").exists()

    @pytest.mark.parametrize("mode", ["no_router", "no_vlm_rule_based"])
    def test_fixed_routing_modes_skip_the_router(self, tmp_path, mode):
        result = run_experiment(_tiny(tmp_path, ablation_mode=mode), tmp_path / mode)
        assert not (tmp_path / mode / "seed_0" / "checkpoints" / "router.json").exists()
        assert result.record.mode == mode

    def test_monolithic_baseline_shares_the_step_axis(self, tmp_path):
        out = tmp_path / "mono"
        result = run_experiment(_tiny(tmp_path, ablation_mode="baseline_monolithic"), out)
        assert result.runs[0].steps == [0, 30, 60]
        assert (out / "seed_0" / "checkpoints" / "monolithic.json").exists()

    def test_monolithic_baseline_is_evaluated_with_its_planner(self, tmp_path):
        out = tmp_path / "mono"
        run_experiment(_tiny(tmp_path, ablation_mode="baseline_monolithic"), out)
        expert = load_expert(out / "seed_0" / "checkpoints" / "monolithic.json")
        spec = get_spec("composite-door")
        assert baseline_controller(spec, expert, SeededRng(0)).mode == "plan"
        trace = read_trace_csv(out / "seed_0" / "trials" / "trial_00.csv")
        # row k + 1 acted from the state recorded in row k
        obs = trace_observations(spec, trace)[:-1]
        policy_mean = np.stack([expert.act(o) for o in obs])
        assert not np.allclose(trace.actions[1:], policy_mean)

    def test_task_must_run_on_its_environment(self, tmp_path):
        config = _tiny(tmp_path, env="two-link-arm")
        with pytest.raises(ConfigError):
            run_experiment(config, tmp_path / "bad")


class TestSingleSkillRun:
    def _config(self, tmp_path, **overrides):
        base = _tiny(tmp_path).model_dump()
        base.update(env=_short_spec(tmp_path, "point-mass-stand"), task=None)
        base.update(overrides)
        return ExperimentConfig.model_validate(base)

    def test_trains_one_expert(self, tmp_path):
        out = tmp_path / "run"
        result = run_experiment(self._config(tmp_path), out)
        assert result.runs[0].steps == [0, 10, 20]
        assert (out / "seed_0" / "checkpoints" / "stand.json").exists()
        assert result.record.env == "point-mass-stand"

    def test_ablation_keeps_single_skill_modes(self, tmp_path):
        results = ablate(self._config(tmp_path), tmp_path / "ablate")
        assert list(results) == ["full", "no_il"]
        lines = (tmp_path / "ablate" / "ablation.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("#")
        assert [line.split(",")[0] for line in lines[2:]] == ["full", "no_il"]


class TestStages:
    def test_retarget_writes_kept_clips_and_a_report(self, tmp_path):
        config = ExperimentConfig(
            env="point-mass-walk", task=None, retarget={"n_clips": 2, "max_iters": 50}
        )
        outcome = retarget_clips(config, 0, tmp_path)
        report = json.loads((tmp_path / "rejections_walk.json").read_text(encoding="utf-8"))
        assert len(report["entries"]) == 2
        assert len(outcome.paths) == len(outcome.kept) == len(outcome.report.kept)
        assert all(p.exists() for p in outcome.paths)
        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "retarget"
        assert manifest["seeds"] == [0]

    def test_distil_router_from_checkpoints(self, tmp_path):
        run_experiment(_tiny(tmp_path, ablation_mode="no_router"), tmp_path / "train")
        ckpt = tmp_path / "train" / "seed_0" / "checkpoints"
        out = tmp_path / "router"
        result = distil_router(_tiny(tmp_path, checkpoint_dir=str(ckpt)), 0, out)
        assert (out / "router.json").exists()
        assert (out / "router_curve.csv").exists()
        assert (out / "demos" / "demo_000.csv").exists()
        assert result.curve[-1].step == 6
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "train-router"

    def test_retarget_command_leaves_a_manifest(self, tmp_path):
        argv = [
            "retarget",
            "--out-dir",
            str(tmp_path),
            "--env",
            "point-mass-stand",
            "--set",
            "retarget.n_clips=1",
        ]
        assert main(argv) == 0
        assert (tmp_path / "manifest.json").exists()
        assert (tmp_path / "rejections_stand.json").exists()

    def test_distil_router_without_checkpoints_raises(self, tmp_path):
        with pytest.raises(PrerequisiteError):
            distil_router(_tiny(tmp_path), 0, tmp_path)


def _stand(rest: list[float]) -> RefTrajectory:
    spec = get_spec("point-mass-stand")
    return ref_generate("stand", spec.dof, spec.dt, {"rest": rest, "period": 1.0})


def _reference_dir(directory: Path, kept: list[bool]) -> list[RefTrajectory]:
    """A retarget-style directory where clip i is kept iff kept[i]; every clip has a CSV."""

    clips = [_stand([0.1 * (i + 1), 0.0]) for i in range(len(kept))]
    entries = []
    for i, (clip, ok) in enumerate(zip(clips, kept)):
        write_reference_csv(clip, reference_path(directory, "stand", i))
        reason = "ok" if ok else "tracking_error"
        entries.append(RejectionEntry(index=i, skill="stand", kept=ok, reason=reason))
    report = RejectionReport(env="point-mass-stand", threshold=0.1, entries=entries)
    write_rejections(report, rejections_path(directory, "stand"))
    return clips


class TestRetargetedReferences:
    def test_only_kept_clips_are_loaded(self, tmp_path):
        clips = _reference_dir(tmp_path, [False, True, True])
        refs = kept_references(tmp_path, get_spec("point-mass-stand"), "stand")
        assert len(refs) == 2
        np.testing.assert_array_equal(refs[0].q, clips[1].q)
        np.testing.assert_array_equal(refs[1].q, clips[2].q)

    def test_all_rejected_is_a_missing_prerequisite(self, tmp_path):
        _reference_dir(tmp_path, [False, False])
        with pytest.raises(PrerequisiteError):
            kept_references(tmp_path, get_spec("point-mass-stand"), "stand")

    def test_missing_report_is_a_missing_prerequisite(self, tmp_path):
        with pytest.raises(PrerequisiteError):
            kept_references(tmp_path, get_spec("point-mass-stand"), "stand")

    def test_report_from_another_env_is_a_config_error(self, tmp_path):
        _reference_dir(tmp_path, [True])
        with pytest.raises(ConfigError):
            kept_references(tmp_path, get_spec("point-mass-walk"), "stand")

    def test_rejected_clips_never_reach_training(self, tmp_path, monkeypatch):
        clips = _reference_dir(tmp_path / "refs", [False, True])
        seen: list[RefTrajectory] = []

        def recording(spec, ref, config, seed, **kwargs):
            seen.append(ref)
            return train_expert(spec, ref, config, seed, **kwargs)

        monkeypatch.setattr(experiment, "train_expert", recording)
        config = _tiny(
            tmp_path,
            env=_short_spec(tmp_path, "point-mass-stand"),
            task=None,
            reference_dir=str(tmp_path / "refs"),
        )
        run_experiment(config, tmp_path / "run")
        assert len(seen) == 1
        np.testing.assert_array_equal(seen[0].q, clips[1].q)

    def test_retarget_output_feeds_expert_training(self, tmp_path):
        env = _short_spec(tmp_path, "point-mass-stand")
        refs = tmp_path / "refs"
        retarget_clips(_tiny(tmp_path, env=env, task=None, retarget={"n_clips": 2}), 0, refs)
        config = _tiny(tmp_path, env=env, task=None, reference_dir=str(refs))
        result = run_experiment(config, tmp_path / "run")
        assert result.runs[0].steps == [0, 10, 20]
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["reference_dir"] == str(refs)


class TestCli:
    def test_overrides_nest_and_parse_json(self):
        assignments = ["budget=10", "expert.hidden=[4,4]", "router.loss.kl_direction=reverse"]
        data = apply_overrides({}, assignments)
        assert data == {
            "budget": 10,
            "expert": {"hidden": [4, 4]},
            "router": {"loss": {"kl_direction": "reverse"}},
        }

    @pytest.mark.parametrize("bad", ["budget", "=3"])
    def test_malformed_override_raises(self, bad):
        with pytest.raises(ConfigError):
            apply_overrides({}, [bad])

    def test_override_cannot_descend_into_a_value(self):
        with pytest.raises(ConfigError):
            apply_overrides({"budget": 3}, ["budget.x=1"])

    def test_invalid_config_exits_with_the_config_code(self, tmp_path):
        argv = ["evaluate", "--out-dir", str(tmp_path), "--set", "budget=-1"]
        assert main(argv) == ConfigError.exit_code

    def test_unreadable_config_file_is_a_config_error(self, tmp_path):
        argv = ["evaluate", "--out-dir", str(tmp_path), "--config", str(tmp_path / "missing.json")]
        assert main(argv) == ConfigError.exit_code

    def test_missing_checkpoints_exit_with_the_prerequisite_code(self, tmp_path):
        argv = ["evaluate", "--out-dir", str(tmp_path), "--set", "budget=0"]
        assert main(argv) == PrerequisiteError.exit_code

    def test_metrics_on_a_finished_run(self, tmp_path, capsys):
        run_experiment(_tiny(tmp_path), tmp_path / "run")
        assert main(["metrics", str(tmp_path / "run")]) == 0
        out = json.loads(capsys.readouterr().out)
        entry = out[str(tmp_path / "run")]
        assert entry["success"].endswith("/2")
        assert "peak_return" in entry

    def test_settings_supply_the_experiment(self, monkeypatch):
        monkeypatch.setenv("SKILLMIX_EXPERIMENT_JSON", '{"task": null, "env": "point-mass-run"}')
        monkeypatch.setenv("SKILLMIX_WORKERS", "3")
        settings = Settings()
        assert settings.workers == 3
        args = build_parser().parse_args(["evaluate", "--set", "budget=7"])
        config = load_config(args, settings)
        assert config.env == "point-mass-run"
        assert config.task is None
        assert config.budget == 7

    @pytest.mark.parametrize("raw", ["[1, 2]", "{not json"])
    def test_malformed_inline_experiment_is_a_config_error(self, monkeypatch, raw):
        monkeypatch.setenv("SKILLMIX_EXPERIMENT_JSON", raw)
        with pytest.raises(ConfigError):
            Settings().experiment()


DOOR_SEEDS = list(range(10))


def _door(**overrides) -> ExperimentConfig:
    data = {
        "task": "door",
        "seeds": DOOR_SEEDS,
        "budget": 1500,
        "eval_interval": 500,
        "success_trials": 2,
        "expert": {"hidden": [32, 32], "latent_dim": 16},
        "router": {"steps": 200},
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


@pytest.fixture(scope="class")
def door_full(tmp_path_factory):
    out = tmp_path_factory.mktemp("door") / "full"
    return out, run_experiment(_door(), out)


@pytest.mark.slow
class TestComparisons:
    def test_composed_experts_beat_the_monolithic_policy(self, door_full, tmp_path):
        _, full = door_full
        mono = run_experiment(_door(ablation_mode="baseline_monolithic"), tmp_path / "mono")
        full_peaks, mono_peaks = full.seed_peaks(), mono.seed_peaks()
        assert sum(full_peaks[s] >= mono_peaks[s] for s in DOOR_SEEDS) >= 7

    def test_task_reward_experts_do_not_converge_on_the_door(self, door_full, tmp_path):
        _, full = door_full
        no_il = run_experiment(_door(ablation_mode="no_il"), tmp_path / "no_il").record
        assert full.record.convergence_step is not None
        assert no_il.convergence_step is None

    def test_no_single_expert_opens_the_door_as_often_as_the_router(self, door_full):
        out, full = door_full
        spec = get_spec("composite-door")
        best = 0.0
        for skill in SKILLS:
            traces = []
            for seed in DOOR_SEEDS:
                expert = load_expert(out / f"seed_{seed}" / "checkpoints" / f"{skill}.json")
                controller = ExpertController(spec, expert)
                rng = SeededRng(seed).spawn("alone", skill)
                traces += [run_episode(spec, controller, rng.spawn(i)) for i in range(2)]
            k, n = success_rate(traces, spec)
            best = max(best, k / n)
        assert best < full.record.success_rate
