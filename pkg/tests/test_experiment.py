import os

import pytest

from src.eval.metrics import DetectionReport
from src.pipeline.experiment import (
    ExperimentConfig,
    ExperimentManifest,
    apply_overrides,
    load_experiment_config,
    prepare_environment,
    resolve_output_dir,
    run_experiment,
    run_standard_phase,
)
from src.scripts.mixoe import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from src.training.tuning import load_grid
from src.utils.common import read_json, write_json
from src.utils.errors import InvalidArgumentError
from tests.conftest import smoke_config_dict

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _config(**overrides) -> ExperimentConfig:
    return ExperimentConfig.from_dict(smoke_config_dict(**overrides))


def _reports(manifest: ExperimentManifest) -> list[dict]:
    return [read_json(p) for p in manifest.reports if p.endswith(".report.json")]


class TestExperimentConfig:
    def test_defaults_and_objective(self):
        config = _config()
        assert config.objective.kind == "oe"
        assert config.finetune.outlier_batch_size == 2 * config.finetune.id_batch_size
        assert config.standard.seed == config.finetune.seed == 0

    def test_hash_changes_with_content(self):
        assert _config().hash() == _config().hash()
        assert _config().hash() != _config(seed=1).hash()

    def test_round_trip(self):
        config = _config()
        assert ExperimentConfig.from_dict(config.to_dict()).hash() == config.hash()

    def test_unknown_keys(self):
        with pytest.raises(InvalidArgumentError):
            _config(learning_rate=0.1)
        with pytest.raises(InvalidArgumentError):
            ExperimentConfig.from_dict({"data": {"classes": 3}})

    def test_unknown_scorer(self):
        with pytest.raises(InvalidArgumentError):
            _config(scorers=["mahalanobis"])

    def test_objective_inside_finetune_section(self):
        with pytest.raises(InvalidArgumentError):
            ExperimentConfig.from_dict({"finetune": {"objective": {"kind": "oe"}}})


class TestOverrides:
    def test_dotted_keys(self):
        data = apply_overrides(smoke_config_dict(), {"finetune.epochs": 3, "seed": 7, "objective.beta": None})
        assert data["finetune"]["epochs"] == 3
        assert data["seed"] == 7
        assert "beta" not in data["objective"]

    def test_kind_override_resets_objective(self):
        base = smoke_config_dict(objective={"kind": "energy_oe", "m_in": -20.0})
        data = apply_overrides(base, {"objective.kind": "mixoe", "objective.mode": "cut"})
        assert data["objective"] == {"kind": "mixoe", "mode": "cut"}
        assert base["objective"]["kind"] == "energy_oe"

    def test_override_into_value(self):
        with pytest.raises(InvalidArgumentError):
            apply_overrides({"seed": 1}, {"seed.value": 2})

    def test_load_from_file(self, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(), path)
        config = load_experiment_config(path, {"objective.kind": "mixoe"})
        assert config.objective.label == "mixoe-linear"

    @pytest.mark.parametrize("name", ["smoke.json", "toy.json"])
    def test_shipped_configs_parse(self, name):
        config = load_experiment_config(os.path.join(CONFIG_DIR, name))
        assert config.objective.kind in ("oe", "mixoe")

    def test_shipped_grid_parses(self):
        grid = load_grid(read_json(os.path.join(CONFIG_DIR, "grid_mixoe.json")))
        assert len(grid) == 9 and {c.mode for c in grid} == {"linear"}

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("MIXOE_OUTPUT_ROOT", str(tmp_path))
        config = _config()
        assert resolve_output_dir(config) == os.path.join(str(tmp_path), f"toy_fine-{config.hash()[:12]}")
        assert resolve_output_dir(config, "explicit") == "explicit"


class TestPreparedEnvironment:
    def test_evaluation_families_are_filtered_from_outliers(self):
        prepared = prepare_environment(_config())
        sources = set(prepared.outlier_train.source_labels) | set(prepared.outlier_validation.source_labels)
        assert sources == {"concept_a", "concept_b", "concept_c", "concept_d"}
        assert len(prepared.eval_data.fine_ood) == 2 * 4

    def test_audit_detects_reads(self):
        prepared = prepare_environment(_config())
        prepared.reset_audit()
        prepared.check_audit("nothing")
        prepared.partition.test.inputs
        with pytest.raises(RuntimeError):
            prepared.check_audit("leaky phase")

    def test_standard_phase_leaves_held_out_data_unread(self, tmp_path):
        config = _config()
        prepared = prepare_environment(config)
        _, checkpoint, path = run_standard_phase(config, prepared, str(tmp_path))
        assert checkpoint.completed and os.path.exists(path)
        assert all(s.reads == 0 for s in prepared.guarded())


class TestRunExperiment:
    def test_manifest(self, tmp_path):
        manifest = run_experiment(_config(), str(tmp_path / "run"))
        assert manifest.objective == "oe"
        assert set(manifest.checkpoints) == {"split", "standard", "oe"}
        assert len(manifest.score_tables) == 4
        assert len(_reports(manifest)) == 4
        assert manifest.reports[-1].endswith("reports.csv")
        assert all(os.path.exists(p) for p in manifest.reports + manifest.score_tables)
        saved = ExperimentManifest.load(str(tmp_path / "run" / "manifest.json"))
        assert saved.config_hash == _config().hash()

    def test_same_config_same_reports(self, tmp_path):
        first = run_experiment(_config(), str(tmp_path / "a"))
        second = run_experiment(_config(), str(tmp_path / "b"))
        assert _reports(first) == _reports(second)

    def test_standard_objective_continues_training(self, tmp_path):
        manifest = run_experiment(_config(objective={"kind": "standard"}), str(tmp_path / "run"))
        assert "standard_continued" in manifest.checkpoints
        objectives = {DetectionReport.from_dict(r).objective for r in _reports(manifest)}
        assert objectives == {"standard", "standard_continued"}

    def test_visualize(self, tmp_path):
        manifest = run_experiment(_config(visualize=True, scorers=["msp"]), str(tmp_path / "run"))
        assert any(p.endswith("scatter_oe.svg") for p in manifest.figures)
        assert all(os.path.exists(p) for p in manifest.figures)


class TestCli:
    def test_make_splits_refuses_to_overwrite(self, tmp_path):
        args = ["make-splits", "--n-classes", "10", "--n-ood", "3", "--out", str(tmp_path)]
        assert main(args) == EXIT_OK
        assert sorted(os.listdir(tmp_path)) == [f"toy_fine_split{k}.json" for k in (1, 2, 3)]
        assert main(args) == EXIT_USAGE
        assert main(args + ["--force"]) == EXIT_OK

    def test_make_splits_needs_classes(self, tmp_path):
        assert main(["make-splits", "--n-ood", "3", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_n_ood_too_large(self, tmp_path):
        assert main(["make-splits", "--n-classes", "4", "--n-ood", "4", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["explode"])
        assert exc.value.code == 2

    def test_invalid_config(self, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(scorers=["nope"]), path)
        assert main(["run", "--config", path, "--output-dir", str(tmp_path / "out")]) == EXIT_USAGE

    @pytest.mark.parametrize(
        "overrides", [{"scorers": ["nope"]}, {"environment": {"n_ood": 6}}], ids=["scorer", "n_ood"]
    )
    def test_invalid_config_leaves_no_run_log(self, overrides, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(**overrides), path)
        out = tmp_path / "out"
        for command in ("run", "train"):
            assert main([command, "--config", path, "--output-dir", str(out)]) == EXIT_USAGE
        assert not (out / "run.log").exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.json"), "--output-dir", str(tmp_path)]) == EXIT_DATA

    def test_finetune_without_standard_checkpoint(self, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(), path)
        code = main(["finetune", "--config", path, "--output-dir", str(tmp_path / "out"), "--objective", "oe"])
        assert code == EXIT_DATA

    def test_run_then_report(self, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(), path)
        out = tmp_path / "out"
        assert main(["run", "--config", path, "--output-dir", str(out), "--objective", "mixoe", "--beta", "2.0"]) == 0
        manifest = read_json(str(out / "manifest.json"))
        assert manifest["objective"] == "mixoe"
        assert manifest["overrides"] == {"objective.kind": "mixoe", "objective.beta": 2.0}
        assert (out / "run.log").exists()

        assert main(["report", "--report-dir", str(out / "reports"), "--out", str(tmp_path / "tables")]) == 0
        tables = os.listdir(tmp_path / "tables")
        assert {"toy_fine.tnr95.csv", "toy_fine.auroc.md"} <= set(tables)
        figures = read_json(str(tmp_path / "tables" / "figures" / "figures.json"))
        assert [f["kind"] for f in figures] == ["tnr_bars", "confidence_density"]

    def test_train_then_evaluate(self, tmp_path):
        path = str(tmp_path / "config.json")
        write_json(smoke_config_dict(), path)
        out = str(tmp_path / "out")
        assert main(["train", "--config", path, "--output-dir", out]) == EXIT_OK
        code = main(
            ["evaluate", "--config", path, "--output-dir", out, "--checkpoint", "standard", "--scorer", "odin"]
        )
        assert code == EXIT_OK
        report = read_json(os.path.join(out, "reports", "toy_fine_split1.standard.odin.report.json"))
        assert report["temperature"] == 1000.0
