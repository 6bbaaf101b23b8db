from __future__ import annotations

import threading
import time
from collections.abc import Callable

import pytest

from dbar_lab.internal.orchestration import ExperimentError, Task, TaskRunner

# ==============================================================================
# BRANCH LEDGER: orchestration.py
# ==============================================================================
#
# Classes (in file order):
#   C001 = TaskRunner
#
# ------------------------------------------------------------------------------
# ## TaskRunner.run(self, tasks)
#    (Class ID: C001, Method ID: M001)
# ------------------------------------------------------------------------------
# C001M001B0001: threads <= 1 -> run tasks inline, in order
# C001M001B0002: len(tasks) <= 1 with threads > 1 -> run inline
# C001M001B0003: threads > 1 and several tasks -> thread pool; results in submission order
# C001M001B0004: no task failed -> return results
# C001M001B0005: some task failed -> raise ExperimentError (causes in task order)
#
# ------------------------------------------------------------------------------
# ## TaskRunner._guarded(self, task)
#    (Class ID: C001, Method ID: M002)
# ------------------------------------------------------------------------------
# C001M002B0001: task.run() returns -> result
# C001M002B0002: task.run() raises Exception -> exception returned as the outcome
# ==============================================================================


def _sleepy(value: int, delay: float) -> Callable[[], int]:
    def _inner() -> int:
        time.sleep(delay)
        return value

    return _inner


def _raise(exc: BaseException) -> Callable[[], int]:
    def _inner() -> int:
        raise exc

    return _inner


RUN_CASES: list[dict[str, object]] = [
    {
        "id": "inline_in_order",
        "threads": 1,
        "tasks": lambda: [Task(f"t{i}", _sleepy(i, 0.0)) for i in range(4)],
        "expect": [0, 1, 2, 3],
        "expect_causes": None,
        "covers": ["C001M001B0001", "C001M001B0004", "C001M002B0001"],
    },
    {
        "id": "single_task_with_pool_size",
        "threads": 4,
        "tasks": lambda: [Task("only", _sleepy(7, 0.0))],
        "expect": [7],
        "expect_causes": None,
        "covers": ["C001M001B0002", "C001M001B0004"],
    },
    {
        "id": "pool_keeps_declaration_order",
        # later tasks finish first
        "threads": 4,
        "tasks": lambda: [Task(f"t{i}", _sleepy(i, 0.02 * (4 - i))) for i in range(4)],
        "expect": [0, 1, 2, 3],
        "expect_causes": None,
        "covers": ["C001M001B0003", "C001M001B0004"],
    },
    {
        "id": "failures_collected_in_task_order",
        "threads": 3,
        "tasks": lambda: [
            Task("ok", _sleepy(1, 0.0)),
            Task("bad-a", _raise(ArithmeticError("a"))),
            Task("bad-b", _raise(ValueError("b"))),
        ],
        "expect": None,
        "expect_causes": [ArithmeticError, ValueError],
        "covers": ["C001M001B0003", "C001M001B0005", "C001M002B0002"],
    },
    {
        "id": "inline_failure",
        "threads": 1,
        "tasks": lambda: [Task("bad", _raise(RuntimeError("boom")))],
        "expect": None,
        "expect_causes": [RuntimeError],
        "covers": ["C001M001B0001", "C001M001B0005", "C001M002B0002"],
    },
]


@pytest.mark.parametrize("case", RUN_CASES, ids=lambda c: str(c["id"]))
def test_task_runner_run(case: dict[str, object]) -> None:
    # Covers: see case["covers"]
    runner: TaskRunner[int] = TaskRunner("anchors", threads=case["threads"])  # type: ignore[arg-type]
    tasks = case["tasks"]()  # type: ignore[operator]

    expect_causes = case["expect_causes"]
    if expect_causes is None:
        assert runner.run(tasks) == case["expect"]
        return

    with pytest.raises(ExperimentError) as exc:
        runner.run(tasks)
    err = exc.value
    assert err.experiment == "anchors"
    assert [type(c) for c in err.causes] == expect_causes
    assert f"{len(expect_causes)} of {len(tasks)} anchors tasks failed" in str(err)


def test_pool_actually_runs_concurrently() -> None:
    barrier = threading.Barrier(2, timeout=5.0)

    def _meet() -> int:
        barrier.wait()
        return 1

    runner: TaskRunner[int] = TaskRunner("probe", threads=2)
    assert runner.run([Task("a", _meet), Task("b", _meet)]) == [1, 1]


def test_empty_task_list() -> None:
    assert TaskRunner("probe", threads=2).run([]) == []
