"""Smoke tests for the python module and the CLI surface.

Run via ctest (PYTHONPATH and BATCHQC_BIN are set by CMake) or manually:
    PYTHONPATH=build/python BATCHQC_BIN=build/tools/batchqc pytest tests/python
"""

import json
import math
import os
import subprocess
from pathlib import Path

import pytest

import batchqc as bq

SCHEMA_DIR = Path(__file__).resolve().parents[2] / "schemas"
BIN = os.environ.get("BATCHQC_BIN", "")


def load_schema(name):
    return json.loads((SCHEMA_DIR / name).read_text())


def validate(instance, schema_name):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(instance=instance, schema=load_schema(schema_name))


def small_table(seed=3):
    cfg = {
        "n_sites": 4,
        "n_studies": 2,
        "samples_per_site": 40,
        "n_features": 10,
        "n_informative": 4,
        "seed": seed,
    }
    table, manifest = bq.generate(json.dumps(cfg))
    return table, manifest


def test_generate_and_accessors():
    table, manifest = small_table()
    assert len(table) == 160
    assert len(table.feature_names) == 10
    assert set(table.sites) == set(manifest["site_offsets"].keys())
    assert all(label in (0, 1) for label in table.labels)
    validate(manifest, "manifest.schema.json")


def test_metrics_bindings():
    assert bq.roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert bq.wasserstein_1d([0.0, 1.0], [0.5]) == pytest.approx(0.5)
    point = bq.optimal_threshold([0.9, 0.8, 0.4, 0.3, 0.2], [1, 1, 1, 0, 0])
    assert point["threshold"] == pytest.approx(0.4)
    h, c = bq.homogeneity_completeness([0, 0, 1, 1], [0, 1, 1, 1])
    assert h == pytest.approx(0.311, abs=1e-3)
    assert c == pytest.approx(0.384, abs=1e-3)
    with pytest.raises(ValueError):
        bq.roc_auc([0.5, 0.5], [1, 1])


def test_train_evaluate_roundtrip():
    table, _ = small_table()
    config = {
        "inner_scheme": {"kind": "stratified_kfold", "k": 3},
        "grid": {
            "preprocessing_cells": [[], ["center"]],
            "classifier_cells": [{"n_trees": 20}],
        },
        "seed": 11,
    }
    model, report = bq.train(table, json.dumps(config), 2)
    validate(report, "cv_report.schema.json")
    assert 0.0 <= report["aggregate"]["outer_mean"] <= 1.0

    model_json = model.to_json()
    validate(json.loads(model_json), "model.schema.json")
    reloaded = bq.TrainedPipeline.from_json(model_json)
    assert reloaded.predict(table) == model.predict(table)

    evaluation = model.evaluate(table)
    assert evaluation["roc_auc"] == pytest.approx(model.train_auc)
    assert all(0.0 <= p <= 1.0 for p in evaluation["probabilities"])


def test_selectors_and_batch_effect():
    table, _ = small_table(9)
    result = bq.ft_noise(table, table.labels, json.dumps({"forest": {"n_trees": 20}}))
    assert set(result["kept"]) | {r["name"] for r in result["removed"]} == set(
        table.feature_names
    )
    score = bq.batch_effect_score(table, "site", json.dumps({"n_runs": 20, "seed": 1}))
    assert 0.0 <= score["completeness_mean"] <= 1.0


def test_strict_configs_reject_unknown_keys():
    table, _ = small_table()
    with pytest.raises(ValueError, match="typo"):
        bq.train(table, json.dumps({"typo": 1}))


def test_splits():
    table, _ = small_table()
    train, test = bq.split_per_study(table, 0.6, 7)
    assert len(train) + len(test) == len(table)
    sub = bq.subsample_site_preserving(table, 80, 7)
    assert len(sub) == 80


@pytest.mark.skipif(not BIN, reason="BATCHQC_BIN not set")
class TestCli:
    @pytest.fixture()
    def workspace(self, tmp_path):
        def run(*args, expect=0):
            proc = subprocess.run(
                [BIN, *args], cwd=tmp_path, capture_output=True, text=True
            )
            assert proc.returncode == expect, proc.stderr
            return proc

        run(
            "synth",
            "--preset",
            "cati-like",
            "--seed",
            "5",
            "--out",
            "data",
        )
        (tmp_path / "train.json").write_text(
            json.dumps(
                {
                    "dataset": "data/dataset.csv",
                    "inner_scheme": {"kind": "stratified_kfold", "k": 3},
                    "grid": {
                        "preprocessing_cells": "none",
                        "classifier_cells": [{"n_trees": 15}],
                    },
                    "seed": 21,
                }
            )
        )
        run("train", "--config", "train.json", "--out", "run")
        return tmp_path, run

    def test_outputs_validate_against_schemas(self, workspace):
        tmp_path, run = workspace
        validate(
            json.loads((tmp_path / "run/model.json").read_text()), "model.schema.json"
        )
        validate(
            json.loads((tmp_path / "run/cv_report.json").read_text()),
            "cv_report.schema.json",
        )
        validate(
            json.loads((tmp_path / "run/training_summary.json").read_text()),
            "training_summary.schema.json",
        )
        validate(
            json.loads((tmp_path / "run/load_report.json").read_text()),
            "load_report.schema.json",
        )
        validate(
            json.loads((tmp_path / "data/manifest.json").read_text()),
            "manifest.schema.json",
        )

        run(
            "evaluate",
            "--model",
            "run/model.json",
            "--data",
            "data/dataset.csv",
            "--out",
            "eval",
        )
        validate(
            json.loads((tmp_path / "eval/evaluation.json").read_text()),
            "evaluation.schema.json",
        )

        run(
            "diagnose",
            "--model",
            "run/model.json",
            "--data",
            "data/dataset.csv",
            "--group-by",
            "site",
            "--kmeans-runs",
            "25",
            "--out",
            "diag",
        )
        diag = json.loads((tmp_path / "diag/diagnostics.json").read_text())
        validate(diag, "diagnostics.schema.json")
        matrix = diag["wasserstein"]["matrix"]
        assert len(matrix) == 5
        for i in range(5):
            assert matrix[i][i] == 0.0
            for j in range(5):
                assert matrix[i][j] == matrix[j][i]

    def test_predict_matches_evaluate_and_roundtrip(self, workspace):
        tmp_path, run = workspace
        run(
            "predict",
            "--model",
            "run/model.json",
            "--data",
            "data/dataset.csv",
            "--out",
            "pred",
        )
        lines = (tmp_path / "pred/predictions.csv").read_text().strip().splitlines()
        assert lines[0] == "id,probability"
        probs = [float(line.split(",")[1]) for line in lines[1:]]

        model = bq.TrainedPipeline.from_json(
            (tmp_path / "run/model.json").read_text()
        )
        table, _ = bq.FeatureTable.load_csv(str(tmp_path / "data/dataset.csv"))
        in_memory = model.predict(table)
        assert len(probs) == len(in_memory)
        assert all(a == b for a, b in zip(probs, in_memory))

    def test_exit_codes(self, workspace):
        tmp_path, run = workspace
        (tmp_path / "bad.json").write_text(json.dumps({"oops": 1}))
        proc = run("train", "--config", "bad.json", expect=2)
        assert "oops" in proc.stderr
        run(
            "evaluate",
            "--model",
            "run/model.json",
            "--data",
            "missing.csv",
            expect=3,
        )

    def test_empty_dataset_predicts_header_only(self, workspace):
        tmp_path, run = workspace
        header = (tmp_path / "data/dataset.csv").read_text().splitlines()[0]
        (tmp_path / "empty.csv").write_text(header + "\n")
        run("predict", "--model", "run/model.json", "--data", "empty.csv", "--out", "p0")
        assert (tmp_path / "p0/predictions.csv").read_text() == "id,probability\n"

    def test_single_class_evaluation_is_undefined_but_ok(self, workspace):
        tmp_path, run = workspace
        lines = (tmp_path / "data/dataset.csv").read_text().splitlines()
        header = lines[0].split(",")
        label_col = header.index("label")
        rows = [lines[0]]
        for line in lines[1:]:
            cells = line.split(",")
            cells[label_col] = "0"
            rows.append(",".join(cells))
        (tmp_path / "oneclass.csv").write_text("\n".join(rows) + "\n")
        run(
            "evaluate",
            "--model",
            "run/model.json",
            "--data",
            "oneclass.csv",
            "--out",
            "ev1",
        )
        report = json.loads((tmp_path / "ev1/evaluation.json").read_text())
        assert report["results"][0]["roc_auc"] == "undefined"
        validate(report, "evaluation.schema.json")

    def test_diagnose_by_study_without_model(self, workspace):
        tmp_path, run = workspace
        run(
            "diagnose",
            "--data",
            "data/dataset.csv",
            "--group-by",
            "study",
            "--kmeans-runs",
            "10",
            "--out",
            "diag_study",
        )
        diag = json.loads((tmp_path / "diag_study/diagnostics.json").read_text())
        validate(diag, "diagnostics.schema.json")
        assert diag["group_by"] == "study"
        assert diag["wasserstein"] is None
        assert diag["batch_effect"]["study"]["k"] == 8

    def test_determinism_across_workers(self, workspace):
        tmp_path, run = workspace
        digests = set()
        for tag, workers in (("w1a", "1"), ("w1b", "1"), ("w4a", "4"), ("w4b", "4")):
            run(
                "train",
                "--config",
                "train.json",
                "--workers",
                workers,
                "--out",
                f"det_{tag}",
            )
            digests.add((tmp_path / f"det_{tag}/model.json").read_bytes())
        assert len(digests) == 1
