import os

import numpy as np
import pytest

from weightmom import cli, harness
from weightmom.config import ConfigError, ExperimentConfig, parse_config

SMALL = dict(dataset="synthetic", model="mlp", hidden=(16, 8),
             densities=(0.10,), seeds=(1, 2, 3), total_epochs=8,
             batch_size=128, window=3, persistence_k=2, warmup_epochs=3,
             interval=2, final_prune_epoch=7)


class TestConfigParsing:
    def test_namespaced_keys(self):
        config = parse_config("""
            # toy experiment
            dataset = synthetic
            model = mlp
            model.hidden = 16,8
            densities = 0.10, 0.05
            seeds = 1,2
            optimizer.lr = 0.01
            prune.window_T = 5
            prune.persistence_K = 3
            allocate.k_min = 0.02
            schedule.warmup = 5
            schedule.interval_n = 2
            schedule.final_epoch = 9
            total_epochs = 12
        """)
        assert config.densities == (0.10, 0.05)
        assert config.lr == 0.01
        assert config.window == 5
        assert config.persistence_k == 3
        assert config.k_min == 0.02
        assert config.hidden == (16, 8)

    def test_unknown_key_is_error(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config("optimizer.momentum = 0.9")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("total_epochs = soon")

    def test_empty_density_list_rejected(self):
        with pytest.raises(ConfigError, match="densities"):
            ExperimentConfig(densities=())

    def test_density_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(densities=(1.5,))

    def test_warmup_shorter_than_window_rejected(self):
        with pytest.raises(ConfigError, match="warmup"):
            ExperimentConfig(warmup_epochs=5, window=10)

    def test_defaults_match_training_recipe(self):
        config = ExperimentConfig()
        assert config.lr == 0.05
        assert config.lr_decay == 0.5
        assert config.lr_decay_interval == 30
        assert config.beta1 == 0.9
        assert config.batch_size == 128
        assert config.densities == (0.10, 0.05, 0.02)
        assert len(config.seeds) == 3
        assert config.window == 15
        assert config.persistence_k == 10


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    config = ExperimentConfig(out_dir=str(out),
                              methods=("weightmom",), **SMALL)
    report = harness.run_experiment(config, log=None)
    return config, report


class TestRunExperiment:
    def test_run_counts(self, experiment):
        _, report = experiment
        run_ids = {m["run_id"] for m in report["metrics"]}
        dense = {r for r in run_ids if r.startswith("dense")}
        pruned = {r for r in run_ids if r.startswith("weightmom")}
        assert len(dense) == 3
        assert len(pruned) == 3
        summary = [r for r in report["summary"] if r["method"] == "weightmom"]
        assert len(summary) == 1
        assert summary[0]["n"] == 3

    def test_artifacts_written(self, experiment):
        config, _ = experiment
        for name in ("metrics.csv", "events.csv", "summary.csv",
                     "degradation.svg"):
            assert os.path.exists(os.path.join(config.out_dir, name))

    def test_metrics_csv_round_trip(self, experiment):
        config, report = experiment
        rows = harness.read_metrics_csv(
            os.path.join(config.out_dir, "metrics.csv"))
        assert rows == report["metrics"]

    def test_metrics_columns_exact(self, experiment):
        config, _ = experiment
        with open(os.path.join(config.out_dir, "metrics.csv")) as f:
            header = f.readline().strip()
        assert header == ("run_id,seed,method,epoch,lr,train_loss,"
                          "test_acc,global_density")

    def test_events_columns_exact(self, experiment):
        config, _ = experiment
        with open(os.path.join(config.out_dir, "events.csv")) as f:
            header = f.readline().strip()
        assert header == ("epoch,density_before,density_after,layer,tau,"
                          "pruned,shortfall")

    def test_summary_means_match_metrics(self, experiment):
        config, report = experiment
        rows = harness.read_metrics_csv(
            os.path.join(config.out_dir, "metrics.csv"))
        finals = {}
        for row in rows:
            key = row["run_id"]
            if key not in finals or row["epoch"] > finals[key]["epoch"]:
                finals[key] = row
        for cell in report["summary"]:
            accs = [r["test_acc"] for r in finals.values()
                    if r["method"] == cell["method"]]
            assert cell["mean_acc"] == pytest.approx(np.mean(accs), abs=1e-9)

    def test_epochs_contiguous_and_accuracy_in_range(self, experiment):
        _, report = experiment
        by_run = {}
        for row in report["metrics"]:
            by_run.setdefault(row["run_id"], []).append(row)
        for rows in by_run.values():
            assert [r["epoch"] for r in rows] == list(range(len(rows)))
            assert all(0.0 <= r["test_acc"] <= 1.0 for r in rows)
            densities = [r["global_density"] for r in rows]
            assert all(a >= b for a, b in zip(densities, densities[1:]))

    def test_summarize_directory_rebuilds(self, experiment):
        config, report = experiment
        os.remove(os.path.join(config.out_dir, "summary.csv"))
        summary = harness.summarize_directory(config.out_dir)
        assert summary == report["summary"]
        assert os.path.exists(os.path.join(config.out_dir, "summary.csv"))


class TestCli:
    def test_run_and_summarize(self, tmp_path, capsys):
        config_file = tmp_path / "exp.cfg"
        config_file.write_text(
            "dataset = synthetic\n"
            "model = mlp\n"
            "model.hidden = 12,6\n"
            "densities = 0.2\n"
            "seeds = 1\n"
            "methods = weightmom\n"
            "total_epochs = 6\n"
            "prune.window_T = 3\n"
            "prune.persistence_K = 2\n"
            "schedule.warmup = 3\n"
            "schedule.interval_n = 2\n"
            "schedule.final_epoch = 5\n"
            f"out = {tmp_path / 'out'}\n")
        assert cli.main(["run", "--config", str(config_file)]) == 0
        assert cli.main(["summarize", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "weightmom" in out

    def test_bad_config_key_exits_nonzero(self, tmp_path, capsys):
        config_file = tmp_path / "bad.cfg"
        config_file.write_text("no.such.key = 1\n")
        assert cli.main(["run", "--config", str(config_file)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_inspect_checkpoint(self, tmp_path, capsys):
        from weightmom.checkpoint import write_checkpoint
        from weightmom.magtrack import MagnitudeHistory
        from weightmom.netcore import Adam, build_model
        from weightmom.pruner import Masks

        model = build_model("mlp", (4,), 2, seed=0, hidden=(3,))
        history = MagnitudeHistory(model, window=3)
        path = tmp_path / "c.ckpt"
        write_checkpoint(path, model, Masks.ones_like(model), history,
                         Adam(model), epoch=5)
        assert cli.main(["inspect-checkpoint", str(path)]) == 0
        out = capsys.readouterr().out
        assert "epoch: 5" in out
        assert "mask" in out
