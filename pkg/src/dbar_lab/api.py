from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

from dbar_lab.internal.experiments.registry import build_experiment_registry
from dbar_lab.internal.reporting import emit_plot_script, write_csv, write_json
from dbar_lab.model.config import ExperimentConfig, ExperimentKind, load_config
from dbar_lab.model.reports import ExperimentReport

_VERSIONED = ("dbar-compactness-lab", "numpy", "scipy")


def package_versions() -> dict[str, str]:
    versions: dict[str, str] = {}
    for name in _VERSIONED:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


@dataclass(frozen=True, slots=True)
class RunArtifacts:
    report: ExperimentReport
    csv_path: Path
    json_path: Path


@dataclass(kw_only=True, frozen=True, slots=True)
class DbarLab:
    """
    Entry point for running experiments from Python.

    Methods:
        run(config) -> ExperimentReport
            Runs the configured experiment in memory.
        run_and_write(config) -> RunArtifacts
            Runs it and writes `<out>/<kind>.csv` and `<out>/<kind>.json`.
    """

    # :: ExternalApiMethod
    @staticmethod
    def run(config: ExperimentConfig) -> ExperimentReport:
        # :: FeatureStart | name=experiment_run
        runner = build_experiment_registry().runner(config.kind.value)
        logging.info(f"[lab] {config.kind.value} started (seed={config.seed}, threads={config.threads})")
        outcome = runner(config=config)
        report = ExperimentReport(
            kind=config.kind.value,
            config=config.to_mapping(),
            rows=outcome.rows,
            ledger=outcome.ledger,
            certificates=outcome.certificates,
            versions=package_versions(),
            seed=config.seed,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            failures=outcome.failures,
        )
        logging.info(f"[lab] {config.kind.value} finished: {len(report.rows)} rows, passed={report.passed}")
        # :: FeatureEnd | name=experiment_run
        return report

    # :: ExternalApiMethod
    @staticmethod
    def run_and_write(config: ExperimentConfig) -> RunArtifacts:
        report = DbarLab.run(config)
        stem = config.out_dir / config.kind.value
        csv_path = write_csv(report.rows, stem.with_suffix(".csv"))
        json_path = write_json(report, stem.with_suffix(".json"))
        return RunArtifacts(report, csv_path, json_path)

    # :: ExternalApiMethod
    @staticmethod
    def plot_script(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
        return emit_plot_script(csv_path, out_path)


def run_experiment(
    kind: ExperimentKind | str, config_path: str | Path | None = None, **overrides: object
) -> ExperimentReport:
    """Loads the layered configuration for `kind` and runs it."""
    return DbarLab.run(load_config(kind, config_path, overrides))


__all__ = ["DbarLab", "RunArtifacts", "package_versions", "run_experiment"]
