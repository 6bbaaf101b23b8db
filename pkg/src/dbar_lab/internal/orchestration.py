from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Generic, TypeVar

T = TypeVar("T")


class ExperimentError(RuntimeError):
    """
    Raised when one or more experiment tasks fail.

    Attributes:
        experiment (str): Experiment kind.
        causes (tuple[BaseException, ...]): The task failures, in task order.
    """

    def __init__(self, message: str, *, experiment: str, causes: Sequence[BaseException] = ()):
        super().__init__(message)
        self.experiment = experiment
        self.causes = tuple(causes)


@dataclass(frozen=True, slots=True)
class Task(Generic[T]):
    """One independent unit of an experiment, identified by its parameters."""

    label: str
    run: Callable[[], T]


@dataclass(frozen=True, slots=True)
class TaskRunner(Generic[T]):
    """
    Runs tasks on a thread pool and returns results in declaration order.

    Completion order never leaks into the results, so reports only depend on
    the configuration and the seed.
    """

    experiment: str
    threads: int = 1

    def run(self, tasks: Sequence[Task[T]]) -> list[T]:
        # :: FeatureStart | name=task_orchestration
        if self.threads <= 1 or len(tasks) <= 1:
            outcomes = [self._guarded(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = [pool.submit(self._guarded, t) for t in tasks]
                outcomes = [f.result() for f in futures]

        causes = [o for o in outcomes if isinstance(o, BaseException)]
        if causes:
            # :: FeatureEnd | name=task_orchestration | outcome=task_failure
            raise ExperimentError(
                f"{len(causes)} of {len(tasks)} {self.experiment} tasks failed: {causes[0]}",
                experiment=self.experiment,
                causes=causes,
            )
        # :: FeatureEnd | name=task_orchestration | outcome=success
        return outcomes  # type: ignore[return-value]

    def _guarded(self, task: Task[T]) -> T | BaseException:
        logging.debug(f"task started: {self.experiment}/{task.label}")
        try:
            result = task.run()
        except Exception as e:
            logging.debug(f"task failed: {self.experiment}/{task.label} err={type(e).__name__}: {e}")
            return e
        logging.debug(f"task finished: {self.experiment}/{task.label}")
        return result
