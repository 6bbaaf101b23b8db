from __future__ import annotations

import inspect
from collections.abc import Mapping
from dataclasses import dataclass
from importlib.metadata import EntryPoint, entry_points
from typing import Any

from dbar_lab.internal.experiments.builtin import BUILTIN_EXPERIMENTS, ExperimentRunner
from dbar_lab.model.config import ExperimentConfig

EXPERIMENT_ENTRYPOINT_GROUP = "dbar_lab.experiments"


class ExperimentRegistryError(RuntimeError):
    pass


class ExperimentEntrypointError(ExperimentRegistryError):
    pass


@dataclass(frozen=True, slots=True)
class ExperimentRegistry:
    """
    Experiment runners available to a single run.

    builtins: runners shipped with the lab
    externals: runners discovered via entry points
    """

    builtins: Mapping[str, ExperimentRunner]
    externals: Mapping[str, ExperimentRunner]

    def merged(self) -> dict[str, ExperimentRunner]:
        dupes: set[str] = set(self.builtins).intersection(self.externals)
        if dupes:
            raise ExperimentRegistryError(
                f"duplicate experiment ids found in builtins and entry points: {sorted(dupes)}"
            )
        merged: dict[str, ExperimentRunner] = dict(self.builtins)
        merged.update(self.externals)
        return merged

    def runner(self, experiment_id: str) -> ExperimentRunner:
        runners = self.merged()
        if experiment_id not in runners:
            raise ExperimentRegistryError(f"no experiment registered as {experiment_id!r}")
        return runners[experiment_id]


def _config_annotation(runner_obj: object) -> object:
    try:
        sig = inspect.signature(runner_obj, eval_str=True)  # type: ignore[arg-type]
    except (NameError, AttributeError, SyntaxError, TypeError):
        sig = inspect.signature(runner_obj)  # type: ignore[arg-type]
    return sig.parameters["config"].annotation


def _accepts_experiment_config(annotation: object) -> bool:
    if annotation is inspect.Parameter.empty or annotation is Any:
        return True
    if isinstance(annotation, str):
        return annotation.rsplit(".", 1)[-1] == ExperimentConfig.__name__
    return inspect.isclass(annotation) and issubclass(ExperimentConfig, annotation)


def _enforce_runner_callable(experiment_id: str, runner_obj: object) -> ExperimentRunner:
    """
    Entry points must load a plain callable with a keywordable `config`:
        def runner(*, config: ExperimentConfig) -> ExperimentOutcome

    An annotated `config` must accept an ExperimentConfig; the lab always
    passes the layered configuration, never a section of it.
    """
    if not callable(runner_obj) or inspect.isclass(runner_obj):
        raise ExperimentEntrypointError(
            f"experiment entry point '{experiment_id}' must load a runner function; "
            f"got {type(runner_obj).__name__}"
        )

    sig = inspect.signature(runner_obj)
    p = sig.parameters.get("config")
    if p is None:
        raise ExperimentEntrypointError(
            f"experiment entry point '{experiment_id}' must accept keyword argument 'config'. Signature={sig}"
        )
    if p.kind not in (inspect.Parameter.KEYWORD_ONLY, inspect.Parameter.POSITIONAL_OR_KEYWORD):
        raise ExperimentEntrypointError(
            f"experiment entry point '{experiment_id}' param 'config' must be keywordable. Signature={sig}"
        )
    annotation = _config_annotation(runner_obj)
    if not _accepts_experiment_config(annotation):
        raise ExperimentEntrypointError(
            f"experiment entry point '{experiment_id}' param 'config' must be annotated ExperimentConfig; "
            f"got {annotation!r}"
        )
    return runner_obj  # type: ignore[return-value]


def _load_entrypoint_runners(*, group: str) -> dict[str, ExperimentRunner]:
    runners: dict[str, ExperimentRunner] = {}
    dupes: set[str] = set()

    ep: EntryPoint
    for ep in entry_points().select(group=group):
        runner = _enforce_runner_callable(ep.name, ep.load())
        if ep.name in runners:
            dupes.add(ep.name)
            continue
        runners[ep.name] = runner

    if dupes:
        raise ExperimentEntrypointError(
            f"duplicate experiment ids found in entry points group '{group}': {sorted(dupes)}"
        )
    return runners


def build_experiment_registry() -> ExperimentRegistry:
    return ExperimentRegistry(
        builtins=BUILTIN_EXPERIMENTS,
        externals=_load_entrypoint_runners(group=EXPERIMENT_ENTRYPOINT_GROUP),
    )
