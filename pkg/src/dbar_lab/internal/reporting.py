from __future__ import annotations

import csv
import logging
from collections.abc import Iterable
from pathlib import Path

import numpy as np

from dbar_lab.model.fields import FormField01, FormField02, ScalarField, SeparableForm01
from dbar_lab.model.reports import CSV_COLUMNS, ExperimentReport, ExperimentRow


class ReportError(RuntimeError):
    pass


class MissingColumnError(ReportError):
    def __init__(self, message: str, *, columns: Iterable[str] = ()):
        super().__init__(message)
        self.columns = tuple(columns)


def write_csv(rows: Iterable[ExperimentRow], path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_cells())
    logging.info(f"wrote {target}")
    return target


def read_csv(path: str | Path) -> list[ExperimentRow]:
    with open(path, newline="", encoding="utf-8") as f:
        return [ExperimentRow.from_mapping(r) for r in csv.DictReader(f)]


def write_json(report: ExperimentReport, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(report.to_json() + "\n", encoding="utf-8")
    logging.info(f"wrote {target}")
    return target


# :: MechanicalOperation | type=serialization
def dump_field(field: ScalarField | FormField01 | FormField02 | SeparableForm01, path: str | Path) -> Path:
    """
    Writes the nonzero entries of a field as `node_index component real imag`.

    node_index is the C-order flat index into the lattice box.
    """
    if isinstance(field, SeparableForm01):
        field = field.to_form()
    match field:
        case ScalarField():
            parts = [("scalar", field.values)]
        case FormField01():
            parts = [("dzbar1", field.f1), ("dzbar2", field.f2)]
        case FormField02():
            parts = [("dzbar1dzbar2", field.f12)]
        case _:
            raise ReportError(f"cannot dump {type(field).__name__}")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []
    for name, values in parts:
        flat = values.reshape(-1)
        for idx in np.flatnonzero(flat):
            v = complex(flat[idx])
            lines.append(f"{idx} {name} {v.real!r} {v.imag!r}")
    lines.sort(key=lambda s: (int(s.split(" ", 1)[0]), s))
    target.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return target


_SCRIPT_HEADER = '''\
"""Plots {csv_name}. Needs matplotlib."""
import csv
import re

import matplotlib.pyplot as plt

with open({csv_path!r}, newline="") as f:
    rows = list(csv.DictReader(f))

'''

_SHRINK_BODY = '''\
pts = []
for r in rows:
    m = re.search(r"\\(([^)]+)\\)", r["neighborhood"])
    if m and r["lambda"]:
        pts.append((float(m.group(1)), float(r["lambda"])))
pts.sort()
plt.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label="lambda_h")
plt.xlabel("neighborhood radius")
plt.ylabel("lambda")
'''

_DISC_BODY = '''\
pts = []
for r in rows:
    if r["r_quotient"] and r["witness_bound"] and not r["h"]:
        j = int(r["neighborhood"].split("_")[-1])
        pts.append((j, float(r["r_quotient"]), float(r["witness_bound"])))
pts.sort()
js = [p[0] for p in pts]
plt.plot(js, [p[1] for p in pts], "o-", label="R_j")
plt.plot(js, [p[2] for p in pts], "s--", label="1/j^2 + C_f")
plt.xlabel("j")
plt.ylabel("Rayleigh quotient")
'''

_GENERIC_BODY = '''\
pts = sorted((float(r["h"]), float(r["lambda"])) for r in rows if r["h"] and r["lambda"])
plt.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label="lambda_h")
plt.xlabel("h")
plt.ylabel("lambda")
'''

_SCRIPT_FOOTER = '''\
plt.legend()
plt.title({title!r})
plt.savefig({png_path!r}, dpi=150)
'''


def emit_plot_script(csv_path: str | Path, out_path: str | Path | None = None) -> Path:
    """
    Writes a self-contained matplotlib script for an experiment CSV.

    Shrink studies plot lambda against the radius on log-log axes, the disc
    example plots R_j and its bound against j, anything else lambda against h.

    Raises:
        MissingColumnError: If the CSV is empty or lacks a documented column.
    """
    source = Path(csv_path)
    with open(source, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        rows = list(reader)
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise MissingColumnError(f"{source} lacks columns {missing}", columns=missing)
    kind = rows[0]["experiment"] if rows else ""
    match kind:
        case "shrink-study":
            body = _SHRINK_BODY
        case "disc-example":
            body = _DISC_BODY
        case _:
            body = _GENERIC_BODY
    target = Path(out_path) if out_path is not None else source.with_suffix(".plot.py")
    script = (
        _SCRIPT_HEADER.format(csv_name=source.name, csv_path=source.as_posix())
        + body
        + _SCRIPT_FOOTER.format(title=kind or source.stem, png_path=target.with_suffix(".png").as_posix())
    )
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(script, encoding="utf-8")
    logging.info(f"wrote {target}")
    return target
