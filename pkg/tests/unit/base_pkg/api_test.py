from __future__ import annotations

import json

import pytest

from dbar_lab import api as uut
from dbar_lab.internal.experiments.builtin import ExperimentOutcome
from dbar_lab.internal.experiments.registry import ExperimentRegistry
from dbar_lab.internal.reporting import read_csv
from dbar_lab.model.config import ExperimentKind, load_config
from dbar_lab.model.reports import ExperimentRow


def _fake_anchors(*, config):
    row = ExperimentRow(
        experiment="anchors",
        domain="cube(1.0)",
        neighborhood="interior",
        h=config.anchors.h[0],
        dofs=162,
        lambda_value=9.1,
        residual=1e-12,
    )
    return ExperimentOutcome(rows=(row,), ledger={"exact": 9.87})


def _fake_failing(*, config):
    return ExperimentOutcome(
        rows=(ExperimentRow(experiment="anchors", passed=False),), failures=("anchor drifted",)
    )


@pytest.fixture
def registry(monkeypatch: pytest.MonkeyPatch):
    runners = {"anchors": _fake_anchors}
    monkeypatch.setattr(
        uut, "build_experiment_registry", lambda: ExperimentRegistry(builtins=runners, externals={})
    )
    return runners


def test_run_wraps_outcome(registry):
    report = uut.DbarLab.run(load_config(ExperimentKind.ANCHORS, None, {"seed": 4}))
    assert report.kind == "anchors"
    assert report.seed == 4
    assert report.passed
    assert report.ledger == {"exact": 9.87}
    assert report.config["experiment"]["seed"] == 4
    assert set(report.versions) == {"dbar-compactness-lab", "numpy", "scipy"}
    assert report.timestamp.endswith("+00:00")


def test_failures_mark_report_failed(registry):
    registry["anchors"] = _fake_failing
    report = uut.DbarLab.run(load_config(ExperimentKind.ANCHORS))
    assert not report.passed
    assert report.failures == ("anchor drifted",)


def test_run_and_write(registry, tmp_path):
    cfg = load_config(ExperimentKind.ANCHORS, None, {"out": str(tmp_path / "runs"), "h": [0.25]})
    artifacts = uut.DbarLab.run_and_write(cfg)
    assert artifacts.csv_path == tmp_path / "runs" / "anchors.csv"
    assert artifacts.json_path == tmp_path / "runs" / "anchors.json"

    rows = read_csv(artifacts.csv_path)
    assert len(rows) == 1
    assert rows[0].h == 0.25
    doc = json.loads(artifacts.json_path.read_text(encoding="utf-8"))
    assert doc["kind"] == "anchors"
    assert doc["passed"] is True


def test_run_experiment_loads_layers(registry, tmp_path):
    path = tmp_path / "lab.toml"
    path.write_text("[anchors]\nh = [0.5]\n", encoding="utf-8")
    report = uut.run_experiment("anchors", path)
    assert report.rows[0].h == 0.5


def test_package_versions_tolerates_missing(monkeypatch: pytest.MonkeyPatch):
    def _missing(name: str) -> str:
        raise uut.PackageNotFoundError(name)

    monkeypatch.setattr(uut, "version", _missing)
    assert set(uut.package_versions().values()) == {"unknown"}
