"""Synchronization-matrix rendering and canonical plan export/import.

The matrix is functional rows x time-period columns over scheduled leaf
activities. Canonical export is order-normalized JSON, a pure function of
the plan value; the CSV form mirrors the matrix for spreadsheet handoff.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .plan import Plan, plan_digest, PLAN_SCHEMA_VERSION
from .scenario import canonical_json

# preferred ordering for well-known functional rows; anything else follows
# alphabetically (coalition KBs may bring their own taxonomy)
ROW_ORDER = ("command", "maneuver", "fires", "intelligence", "aviation",
             "engineer", "air-defense", "logistics")


@dataclass(frozen=True)
class MatrixCell:
    activity_id: str
    unit_id: str
    label: str
    questionable: bool


@dataclass(frozen=True)
class SyncMatrix:
    rows: tuple[str, ...]
    columns: tuple[tuple[int, int], ...]
    cells: dict[tuple[str, int], tuple[MatrixCell, ...]]  # (row, column index)

    def cell(self, row: str, col: int) -> tuple[MatrixCell, ...]:
        return self.cells.get((row, col), ())


def _plan_dict(p) -> dict:
    return p.to_dict() if isinstance(p, Plan) else p


def build_matrix(p, period_length: int | None = None, kb=None) -> SyncMatrix:
    """Render a plan as a synchronization matrix at the given period."""
    doc = _plan_dict(p)
    period = period_length or doc["config"]["period_length"]
    if period <= 0:
        raise ValueError("period_length must be > 0")
    rows_needed = set()
    leaves = []
    templates = _row_lookup(p, kb)
    for a in doc["activities"]:
        if a["children"] or a["start"] is None:
            continue
        row = templates(a["task"])
        rows_needed.add(row)
        leaves.append((a, row))
    horizon = max((a["end"] for a, _ in leaves), default=0)
    n_cols = max(1, math.ceil(horizon / period)) if horizon > 0 else 1
    columns = tuple((k * period, (k + 1) * period) for k in range(n_cols))
    rows = tuple(sorted(rows_needed, key=_row_key))

    cells: dict[tuple[str, int], list[MatrixCell]] = {}
    for a, row in leaves:
        label = f"{a['task']}:{a['executor'] or '-'}"
        questionable = a["status"] == "questionable"
        if questionable:
            label += "[?]"
        cell = MatrixCell(a["id"], a["executor"] or "", label, questionable)
        for k, (lo, hi) in enumerate(columns):
            s, e = a["start"], a["end"]
            if e > s:
                hit = s < hi and e > lo
            else:  # zero-duration: single column, boundary folds into the last
                hit = lo <= s < hi or (s >= hi and k == n_cols - 1)
            if hit:
                cells.setdefault((row, k), []).append(cell)
    frozen = {key: tuple(sorted(v, key=lambda c: c.activity_id))
              for key, v in cells.items()}
    return SyncMatrix(rows=rows, columns=columns, cells=frozen)


def _row_lookup(p, kb):
    if kb is None and isinstance(p, Plan):
        kb = p._kb
    if kb is not None:
        return lambda task: (kb.template(task).functional_row or "other") \
            if kb.has_task(task) else "other"
    return lambda task: "other"


def _row_key(row: str):
    try:
        return (ROW_ORDER.index(row), row)
    except ValueError:
        return (len(ROW_ORDER), row)


def period_label(minute: int) -> str:
    sign = "-" if minute < 0 else "+"
    m = abs(minute)
    return f"H{sign}{m // 60}:{m % 60:02d}"


def matrix_to_csv(matrix: SyncMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, quoting=csv.QUOTE_ALL, lineterminator="\n")
    writer.writerow(["BOS"] + [period_label(lo) for lo, _ in matrix.columns])
    for row in matrix.rows:
        line = [row]
        for k in range(len(matrix.columns)):
            entries = matrix.cell(row, k)
            line.append("; ".join(c.label for c in entries))
        writer.writerow(line)
    return out.getvalue()


# ---------------------------------------------------------------------------
# canonical export / import


def export_plan(p, format: str = "canonical", period_length: int | None = None,
                kb=None) -> str:
    if format == "canonical":
        doc = _plan_dict(p)
        body = {k: v for k, v in doc.items() if k != "plan_digest"}
        body["plan_digest"] = plan_digest(body)
        return canonical_json(body)
    if format == "matrix_csv":
        return matrix_to_csv(build_matrix(p, period_length, kb=kb))
    raise ValueError(f"unknown export format {format!r}")


class PlanImportError(Exception):
    pass


class ImportedPlan:
    """Read-only reconstruction of an exported plan."""

    def __init__(self, doc: dict):
        self.doc = doc

    def to_dict(self) -> dict:
        return self.doc

    @property
    def scenario_digest(self) -> str:
        return self.doc["scenario_digest"]

    @property
    def kb_digest(self) -> str:
        return self.doc["kb_digest"]

    @property
    def flags(self) -> list[dict]:
        return self.doc["flags"]

    @property
    def activities(self) -> dict[str, dict]:
        return {a["id"]: a for a in self.doc["activities"]}


def import_plan(document: str) -> ImportedPlan:
    """Parse and verify a canonical plan document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PlanImportError(f"cannot parse plan document at offset {exc.pos}: "
                              f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise PlanImportError("plan document root must be an object")
    if doc.get("schema_version") != PLAN_SCHEMA_VERSION:
        raise PlanImportError(f"unsupported plan schema_version "
                              f"{doc.get('schema_version')!r}")
    embedded = doc.get("plan_digest")
    body = {k: v for k, v in doc.items() if k != "plan_digest"}
    actual = plan_digest(body)
    if embedded != actual:
        raise PlanImportError("plan digest mismatch: document was altered or "
                              "produced by different inputs")
    _check_plan_invariants(doc)
    return ImportedPlan(doc)


def _check_plan_invariants(doc: dict) -> None:
    acts = {a["id"]: a for a in doc.get("activities", [])}
    unit_ids = set(doc.get("unit_state", {}))
    for a in acts.values():
        if not a["children"] and a["start"] is None:
            raise PlanImportError(f"leaf {a['id']} is unscheduled")
        for c in a["children"]:
            if c not in acts:
                raise PlanImportError(f"activity {a['id']} references missing child {c}")
    for entry in doc.get("attrition_ledger", []):
        for key in ("attacker", "defender"):
            if entry.get(key) and entry[key] not in unit_ids:
                raise PlanImportError(f"attrition ledger references unknown unit {entry[key]}")
        if "activity" in entry and entry["activity"] not in acts:
            raise PlanImportError(f"attrition ledger references unknown activity "
                                  f"{entry['activity']}")
    for entry in doc.get("consumption_ledger", []):
        if entry["unit"] not in unit_ids:
            raise PlanImportError(f"consumption ledger references unknown unit {entry['unit']}")
        if entry["activity"] not in acts:
            raise PlanImportError(f"consumption ledger references unknown activity "
                                  f"{entry['activity']}")
    for f in doc.get("flags", []):
        for aid in f.get("activities", []):
            if aid not in acts:
                raise PlanImportError(f"flag {f['id']} references unknown activity {aid}")
