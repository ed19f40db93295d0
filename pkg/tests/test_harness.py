import csv
import json
from dataclasses import replace

import pytest

from microopt import cli, harness
from microopt.config import load_config
from microopt.optimizer import SOLUTION_SCHEMA
from microopt.slicemodel import import_model, model_metrics

TINY = """
seed = 1
tau = 20
eval_trials = 20

[grid]
traffic_range = [1, 5, 2]
cpu_range = [500, 4000, 700]
bandwidth_range = [5, 40, 7]
samples_per_point = 3

[train]
epochs = 5
lr_decay_epoch = 3
batch_size = 64

[optimizer]
tau1_max = 4
tau2_max = 20
n_init = 4
n_mc_update = 16
n_mc_certify = 32
n_restarts = 1

[sweep]
q_thresh = [3.0, 4.0]
beta_thresh = [0.2]
table_traffic = [2.0, 5.0]

[traffic]
centers = [2.0]

[baselines]
cpu = [500, 4500, 500]
bandwidth = [5, 50, 5]
n_trials = 10
"""


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.toml"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def trained(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["simulate-dataset", "--config", str(tiny_config), "--out", str(out)]) == 0
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def runs(tiny_config, trained, tmp_path_factory):
    outs = []
    for _ in range(2):
        out = tmp_path_factory.mktemp("exp")
        (out / "model.json").write_bytes((trained / "model.json").read_bytes())
        assert run("experiment", tiny_config, out) == 0
        outs.append(out)
    return outs


def run(cmd, config, out, *extra):
    return cli.main([cmd, "--config", str(config), "--out", str(out), *extra])


class TestArtifacts:
    def test_dataset_files(self, trained):
        for name in ("train.csv", "validation.csv", "test.csv"):
            with open(trained / "dataset" / name) as fh:
                header = next(csv.reader(fh))
            assert header == ["x_users", "cpu_millicores", "bw_mbps", "qos_mbps", "split"]
        manifest = json.loads((trained / "dataset" / "manifest.json").read_text())
        assert set(manifest["counts"]) == {"train", "validation", "test"}
        for split, n in manifest["counts"].items():
            with open(trained / "dataset" / f"{split}.csv") as fh:
                assert sum(1 for _ in fh) - 1 == n

    def test_model_file(self, trained):
        doc = json.loads((trained / "model.json").read_text())
        assert doc["version"] == "microopt-model-v1"
        import_model(trained / "model.json")
        with open(trained / "train_metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5 and "validation_nll" in rows[0]

    def test_reloaded_model_reproduces_metrics(self, tiny_config, trained):
        cfg = load_config(tiny_config, out_dir=str(trained))
        logged = json.loads((trained / "train_summary.json").read_text())
        nll, mse, mae = model_metrics(import_model(trained / "model.json"), harness.load_dataset(cfg).subset("test"))
        assert nll == pytest.approx(logged["test_nll"], abs=1e-9)
        assert mse == pytest.approx(logged["test_mse"], abs=1e-9)
        assert mae == pytest.approx(logged["test_mae"], abs=1e-9)

    def test_optimize_solution(self, tiny_config, trained):
        code = run("optimize", tiny_config, trained, "--traffic", "3", "--q-thresh", "3", "--beta-thresh", "0.2")
        assert code in (0, 1)
        doc = json.loads((trained / "solution.json").read_text())
        jsonschema = pytest.importorskip("jsonschema")
        jsonschema.validate(doc, SOLUTION_SCHEMA)
        rows = harness.read_rows(trained / "optimize_result.csv")
        assert rows[0]["scenario"] == "const-x3"
        assert (code == 0) == (rows[0]["status"] == "ok")


class TestExperiment:
    def test_results_layout(self, runs):
        rows = harness.read_rows(runs[0] / "results.csv")
        with open(runs[0] / "results.csv") as fh:
            assert tuple(next(csv.reader(fh))) == harness.RESULT_FIELDS
        # 2 sweep cells, 2 table rows, 2 dynamic scenarios, all times 3 methods
        assert len(rows) == 6 * 3
        assert {r["method"] for r in rows} == {"microopt", "peak_alloc", "grid_optimum"}
        assert all(r["status"] in ("ok", "infeasible") for r in rows)

    def test_byte_identical(self, runs):
        assert (runs[0] / "results.csv").read_bytes() == (runs[1] / "results.csv").read_bytes()
        assert (runs[0] / "summary.json").read_bytes() == (runs[1] / "summary.json").read_bytes()

    def test_summary_recomputable(self, runs, tiny_config):
        cfg = load_config(tiny_config, out_dir=str(runs[0]))
        again = harness.summarize(harness.read_rows(runs[0] / "results.csv"), cfg)
        assert json.loads((runs[0] / "summary.json").read_text()) == json.loads(json.dumps(again))

    def test_peak_alloc_constant(self, runs):
        rows = [r for r in harness.read_rows(runs[0] / "results.csv") if r["method"] == "peak_alloc"]
        assert len({(r["cpu_millicores"], r["bw_mbps"]) for r in rows}) == 1

    def test_parallel_matches_serial(self, runs, tiny_config, tmp_path):
        (tmp_path / "model.json").write_bytes((runs[0] / "model.json").read_bytes())
        cfg = load_config(tiny_config, out_dir=str(tmp_path))
        harness.cmd_experiment(replace(cfg, workers=2))
        assert (tmp_path / "results.csv").read_bytes() == (runs[0] / "results.csv").read_bytes()


class TestAblation:
    def test_variants(self, tiny_config, trained, tmp_path):
        (tmp_path / "model.json").write_bytes((trained / "model.json").read_bytes())
        assert run("ablation", tiny_config, tmp_path) == 0
        rows = harness.read_rows(tmp_path / "ablation.csv")
        assert [r["variant"] for r in rows] == ["0sigma"] * 2 + ["2sigma"] * 2 + ["full"] * 2
        summary = json.loads((tmp_path / "ablation_summary.json").read_text())
        assert set(harness.ABLATION_VARIANTS) <= set(summary)


class TestExitCodes:
    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[optimizer]\nnot_a_knob = 1\n")
        assert run("experiment", path, tmp_path) == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run("train", tmp_path / "missing.toml", tmp_path) == 2

    def test_bad_sla(self, tiny_config, trained):
        assert run("optimize", tiny_config, trained, "--beta-thresh", "1.5") == 2

    def test_failed_cell(self, tiny_config, trained, tmp_path, monkeypatch):
        (tmp_path / "model.json").write_bytes((trained / "model.json").read_bytes())

        def boom(*a, **k):
            raise RuntimeError("solver exploded")

        monkeypatch.setattr(harness, "optimize", boom)
        assert run("experiment", tiny_config, tmp_path) == 1
        rows = harness.read_rows(tmp_path / "results.csv")
        bad = [r for r in rows if r["status"].startswith("error")]
        assert bad and all(r["method"] == "microopt" for r in bad)
        # the other methods still ran
        assert any(r["status"] == "ok" for r in rows)

    def test_missing_dataset_for_train(self, tiny_config, tmp_path):
        assert run("train", tiny_config, tmp_path) == 1

    def test_auto_bootstrap(self, tiny_config, tmp_path):
        code = run("optimize", tiny_config, tmp_path, "--traffic", "2")
        assert code in (0, 1)
        assert (tmp_path / "model.json").is_file()
