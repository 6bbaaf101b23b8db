from __future__ import annotations

import json

import numpy as np
import pytest

from dbar_lab.internal.reporting import (
    MissingColumnError,
    ReportError,
    dump_field,
    emit_plot_script,
    read_csv,
    write_csv,
    write_json,
)
from dbar_lab.model.fields import FormField01, FormField02, ScalarField
from dbar_lab.model.reports import CSV_COLUMNS, ExperimentReport, ExperimentRow
from unit.helpers.lab_helper import cube_grid


def _rows(kind: str = "anchors") -> tuple[ExperimentRow, ...]:
    return (
        ExperimentRow(
            experiment=kind,
            domain="cube(1.0)",
            neighborhood="interior",
            h=0.125,
            dofs=4802,
            lambda_value=8.9,
            residual=1e-12,
        ),
        ExperimentRow(
            experiment=kind,
            domain="product-model",
            neighborhood="V_2",
            witness_bound=18.65,
            alpha="0.0001",
            r_quotient=18.5,
            passed=False,
        ),
    )


def test_csv_header_and_cells(tmp_path):
    path = write_csv(_rows(), tmp_path / "nested" / "anchors.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "anchors,cube(1.0),interior,0.125,4802,8.9,1e-12,,,,true"
    assert lines[2].endswith(",18.65,0.0001,18.5,false")


def test_csv_read_back(tmp_path):
    rows = _rows()
    path = write_csv(rows, tmp_path / "rows.csv")
    assert tuple(read_csv(path)) == rows


def test_json_report(tmp_path):
    report = ExperimentReport(
        kind="anchors",
        config={"experiment": {"kind": "anchors"}, "grid": {"h": [0.125]}},
        rows=_rows(),
        ledger={"errors": [0.1, 0.05]},
        seed=3,
        failures=("anchor error not decreasing",),
    )
    path = write_json(report, tmp_path / "anchors.json")
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["passed"] is False
    assert data["rows"][1]["pass"] is False
    assert ExperimentReport.from_mapping(data).rows == report.rows


def test_dump_scalar_field(tmp_path):
    grid = cube_grid()
    values = np.zeros(grid.shape, dtype=complex)
    values[1, 1, 1, 1] = 0.5 - 0.25j
    values[1, 2, 1, 1] = 2.0
    path = dump_field(ScalarField(grid, values), tmp_path / "u.txt")
    flat = np.ravel_multi_index((1, 1, 1, 1), grid.shape)
    second = np.ravel_multi_index((1, 2, 1, 1), grid.shape)
    assert path.read_text(encoding="utf-8").splitlines() == [
        f"{flat} scalar 0.5 -0.25",
        f"{second} scalar 2.0 0.0",
    ]


def test_dump_form_fields_sorted_by_node(tmp_path):
    grid = cube_grid()
    f1 = np.zeros(grid.shape, dtype=complex)
    f2 = np.zeros(grid.shape, dtype=complex)
    f1[2, 2, 2, 2] = 1.0
    f2[1, 1, 1, 1] = 1j
    lines = dump_field(FormField01(grid, f1, f2), tmp_path / "f.txt").read_text().splitlines()
    assert [line.split()[1] for line in lines] == ["dzbar2", "dzbar1"]
    f12 = np.zeros(grid.shape, dtype=complex)
    f12[3, 3, 3, 3] = -1.0
    (line,) = dump_field(FormField02(grid, f12), tmp_path / "g.txt").read_text().splitlines()
    assert line.split()[1:] == ["dzbar1dzbar2", "-1.0", "0.0"]


def test_dump_rejects_unknown_objects(tmp_path):
    with pytest.raises(ReportError):
        dump_field(np.zeros(3), tmp_path / "x.txt")  # type: ignore[arg-type]


@pytest.mark.parametrize(
    "kind, marker",
    [
        ("shrink-study", "neighborhood radius"),
        ("disc-example", "1/j^2 + C_f"),
        ("anchors", 'plt.xlabel("h")'),
    ],
)
def test_plot_script_per_kind(tmp_path, kind, marker):
    csv_path = write_csv(_rows(kind), tmp_path / f"{kind}.csv")
    script = emit_plot_script(csv_path)
    assert script == csv_path.with_suffix(".plot.py")
    text = script.read_text(encoding="utf-8")
    assert marker in text
    assert "import matplotlib.pyplot as plt" in text
    compile(text, str(script), "exec")


def test_plot_script_custom_target(tmp_path):
    csv_path = write_csv(_rows(), tmp_path / "anchors.csv")
    target = emit_plot_script(csv_path, tmp_path / "plots" / "lam.py")
    assert target.exists()
    assert "lam.png" in target.read_text(encoding="utf-8")


def test_plot_script_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("experiment,h\nanchors,0.1\n", encoding="utf-8")
    with pytest.raises(MissingColumnError) as exc:
        emit_plot_script(path)
    assert "lambda" in exc.value.columns
