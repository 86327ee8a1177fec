"""Student records, CSV ingestion, temporal splits and binary group partitions."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "id",
    "year",
    "gender",
    "age",
    "nationality",
    "hs_location",
    "hs_type",
    "admission_grade",
    "dropout",
    "underperform",
)

CATEGORIES = {
    "gender": ("female", "male"),
    "nationality": ("national", "foreign"),
    "hs_location": ("in_state", "out_of_state"),
    "hs_type": ("public", "non_public"),
}

DEFAULT_GRADE_SCALE = (5.0, 14.0)
DEFAULT_AGE_CUTOFF = 19


class CohortError(ValueError):
    """Invalid cohort data. ``diagnostics`` holds one message per bad row."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        self.diagnostics = list(diagnostics)
        if self.diagnostics:
            message = message + "\n  " + "\n  ".join(self.diagnostics)
        super().__init__(message)


@dataclass(frozen=True)
class StudentRecord:
    id: str
    year: int
    gender: str
    age: int
    nationality: str
    hs_location: str
    hs_type: str
    admission_grade: float
    dropout: int
    underperform: int

    def __post_init__(self):
        for attr, allowed in CATEGORIES.items():
            if getattr(self, attr) not in allowed:
                raise CohortError(f"record {self.id!r}: {attr}={getattr(self, attr)!r} not in {allowed}")
        if self.dropout not in (0, 1) or self.underperform not in (0, 1):
            raise CohortError(f"record {self.id!r}: outcomes must be 0/1")
        if self.dropout and self.underperform:
            raise CohortError(f"record {self.id!r}: underperform=1 requires dropout=0")
        if not math.isfinite(self.admission_grade):
            raise CohortError(f"record {self.id!r}: admission_grade is not finite")

    def to_row(self) -> list[str]:
        return [
            self.id,
            str(self.year),
            self.gender,
            str(self.age),
            self.nationality,
            self.hs_location,
            self.hs_type,
            repr(float(self.admission_grade)),
            str(self.dropout),
            str(self.underperform),
        ]


@dataclass(frozen=True)
class Cohort:
    """An immutable, id-unique collection of records."""

    records: tuple[StudentRecord, ...]
    grade_scale: tuple[float, float] = DEFAULT_GRADE_SCALE
    year_range: tuple[int, int] | None = None
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        lo, hi = self.grade_scale
        if not lo < hi:
            raise CohortError(f"grade scale {self.grade_scale} is empty")
        seen: dict[str, int] = {}
        problems = []
        for i, rec in enumerate(self.records):
            if rec.id in seen:
                problems.append(f"row {i}: duplicate id {rec.id!r} (first seen at row {seen[rec.id]})")
            else:
                seen[rec.id] = i
            if not lo <= rec.admission_grade <= hi:
                problems.append(f"row {i}: admission_grade {rec.admission_grade} outside {self.grade_scale}")
            if self.year_range is not None and not self.year_range[0] <= rec.year <= self.year_range[1]:
                problems.append(f"row {i}: year {rec.year} outside {self.year_range}")
        if problems:
            raise CohortError("invalid cohort", problems)

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, indices: Iterable[int]) -> "Cohort":
        return Cohort(tuple(self.records[i] for i in indices), self.grade_scale, self.year_range)

    def column(self, attr: str) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.records])


class OutcomeTask(str, enum.Enum):
    DROPOUT = "dropout"
    DROPOUT_OR_UNDERPERFORMANCE = "dropout_or_underperformance"

    def label(self, record: StudentRecord) -> int:
        if self is OutcomeTask.DROPOUT:
            return record.dropout
        return int(record.dropout or record.underperform)

    def labels(self, cohort: Cohort) -> np.ndarray:
        return np.array([self.label(r) for r in cohort.records], dtype=np.int64)


# -- group specifications ---------------------------------------------------


@dataclass(frozen=True)
class AttributeEquals:
    attr: str
    value: str


@dataclass(frozen=True)
class Threshold:
    attr: str
    cutoff: float | None = None
    direction: str = "le"  # first group is attr <= cutoff ("le") or attr > cutoff ("gt")

    def __post_init__(self):
        if self.direction not in ("le", "gt"):
            raise ValueError(f"direction must be 'le' or 'gt', got {self.direction!r}")


@dataclass(frozen=True)
class GroupSpec:
    """A rule splitting any cohort into two disjoint, exhaustive groups.

    ``labels`` names the (matching, non-matching) sides in that order; report
    ratios are first over second.
    """

    name: str
    rule: AttributeEquals | Threshold
    labels: tuple[str, str] = ("in", "out")
    cutoff_source: str = "fixed"  # or "median-of-training"

    def __post_init__(self):
        if self.cutoff_source not in ("fixed", "median-of-training"):
            raise ValueError(f"unknown cutoff_source {self.cutoff_source!r}")
        if isinstance(self.rule, Threshold) and self.cutoff_source == "fixed" and self.rule.cutoff is None:
            raise ValueError(f"spec {self.name!r}: fixed threshold needs a cutoff")
        if isinstance(self.rule, AttributeEquals) and self.cutoff_source != "fixed":
            raise ValueError(f"spec {self.name!r}: attribute-equals rules take no cutoff")

    def resolve_cutoff(self, training_reference: Cohort | None) -> float | None:
        if not isinstance(self.rule, Threshold):
            return None
        if self.cutoff_source == "fixed":
            return float(self.rule.cutoff)
        if training_reference is None or len(training_reference) == 0:
            raise CohortError(f"spec {self.name!r}: median cutoff needs a nonempty training cohort")
        return float(np.median(training_reference.column(self.rule.attr).astype(float)))

    def to_dict(self) -> dict:
        rule = {"type": "attribute-equals", "attr": self.rule.attr, "value": self.rule.value} \
            if isinstance(self.rule, AttributeEquals) else \
            {"type": "threshold", "attr": self.rule.attr, "cutoff": self.rule.cutoff, "direction": self.rule.direction}
        return {"name": self.name, "rule": rule, "labels": list(self.labels), "cutoff_source": self.cutoff_source}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSpec":
        r = d["rule"]
        if r["type"] == "attribute-equals":
            rule = AttributeEquals(r["attr"], r["value"])
        elif r["type"] == "threshold":
            rule = Threshold(r["attr"], r.get("cutoff"), r.get("direction", "le"))
        else:
            raise ValueError(f"unknown rule type {r['type']!r}")
        return cls(d["name"], rule, tuple(d.get("labels", ("in", "out"))), d.get("cutoff_source", "fixed"))


def default_group_specs() -> list[GroupSpec]:
    """The five audited partitions, ordered and oriented as in the published tables."""
    return [
        GroupSpec("nationality", AttributeEquals("nationality", "national"), ("Nationals", "Foreigners")),
        GroupSpec("hs_location", AttributeEquals("hs_location", "in_state"),
                  ("State_Highschool", "NonState_Highschool")),
        GroupSpec("hs_type", AttributeEquals("hs_type", "public"), ("Pub_Highschool", "NonPub_Highschool")),
        GroupSpec("admission_grade", Threshold("admission_grade", None, "le"),
                  ("Low_AdmissionGrade", "High_AdmissionGrade"), cutoff_source="median-of-training"),
        GroupSpec("gender", AttributeEquals("gender", "male"), ("Male", "Female")),
    ]


def age_group_spec(cutoff: int = DEFAULT_AGE_CUTOFF) -> GroupSpec:
    return GroupSpec("age", Threshold("age", cutoff, "le"), (f"Age_le_{cutoff}", f"Age_gt_{cutoff}"))


# -- operations ---------------------------------------------------------------


@dataclass(frozen=True)
class LoadFilters:
    """Row filters applied at load time; filtered rows are reported, not fatal."""

    drop_missing_grade: bool = False
    drop_missing_outcome: bool = False
    drop_no_first_trimester: bool = False


def read_schema(path: str | Path) -> dict[str, str]:
    """Read a JSON sidecar mapping user column names to canonical names."""
    with open(path) as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise CohortError(f"{path}: schema must be a JSON object")
    bad = sorted(v for v in mapping.values() if v not in CSV_COLUMNS + ("first_trimester",))
    if bad:
        raise CohortError(f"{path}: unknown canonical columns {bad}")
    return mapping


def _parse_binary(text: str) -> int:
    if text in ("0", "1"):
        return int(text)
    raise ValueError(f"expected 0/1, got {text!r}")


def load_cohort(
    path: str | Path,
    schema: dict[str, str] | str | Path | None = None,
    filters: LoadFilters = LoadFilters(),
    grade_scale: tuple[float, float] = DEFAULT_GRADE_SCALE,
) -> Cohort:
    """Read a cohort CSV.

    Parameters
    ----------
    path : path to the CSV file.
    schema : mapping (or path to a JSON sidecar) from the file's column names
        to canonical names. Unmapped columns are taken as already canonical.
    filters : rows matching an enabled filter are dropped with a diagnostic.

    Raises
    ------
    CohortError
        On a missing column, an unparseable value or a duplicate id. All bad
        rows are listed, with 0-based data row indices.
    """
    if isinstance(schema, (str, Path)):
        schema = read_schema(schema)
    schema = schema or {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"{path}: empty file") from None
        canon = [schema.get(h.strip(), h.strip()) for h in header]
        missing = [c for c in CSV_COLUMNS if c not in canon]
        if missing:
            raise CohortError(f"{path}: missing required columns {missing}")
        pos = {c: canon.index(c) for c in canon}
        rows = list(reader)

    records: list[StudentRecord] = []
    errors: list[str] = []
    dropped: list[str] = []
    first_seen: dict[str, int] = {}
    for i, row in enumerate(rows):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            errors.append(f"row {i}: expected {len(header)} fields, got {len(row)}")
            continue
        get = {c: row[j].strip() for c, j in pos.items()}
        if filters.drop_no_first_trimester and get.get("first_trimester", "1") == "0":
            dropped.append(f"row {i}: dropped (not enrolled in the first trimester)")
            continue
        if filters.drop_missing_grade and get["admission_grade"] == "":
            dropped.append(f"row {i}: dropped (missing admission_grade)")
            continue
        if filters.drop_missing_outcome and (get["dropout"] == "" or get["underperform"] == ""):
            dropped.append(f"row {i}: dropped (missing outcome)")
            continue
        try:
            rec = StudentRecord(
                id=get["id"],
                year=int(get["year"]),
                gender=get["gender"].lower(),
                age=int(get["age"]),
                nationality=get["nationality"].lower(),
                hs_location=get["hs_location"].lower(),
                hs_type=get["hs_type"].lower(),
                admission_grade=float(get["admission_grade"]),
                dropout=_parse_binary(get["dropout"]),
                underperform=_parse_binary(get["underperform"]),
            )
        except (ValueError, CohortError) as exc:
            errors.append(f"row {i}: {exc}")
            continue
        if not rec.id:
            errors.append(f"row {i}: empty id")
            continue
        if rec.id in first_seen:
            errors.append(f"row {i}: duplicate id {rec.id!r} (also row {first_seen[rec.id]})")
            continue
        if not grade_scale[0] <= rec.admission_grade <= grade_scale[1]:
            errors.append(f"row {i}: admission_grade {rec.admission_grade} outside {grade_scale}")
            continue
        first_seen[rec.id] = i
        records.append(rec)
    if errors:
        raise CohortError(f"{path}: {len(errors)} invalid row(s)", errors)
    for msg in dropped:
        logger.info("%s: %s", path, msg)
    return Cohort(tuple(records), grade_scale, diagnostics=tuple(dropped))


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in cohort.records:
            w.writerow(rec.to_row())


def temporal_split(cohort: Cohort, train_years: Iterable[int], test_years: Iterable[int]) -> tuple[Cohort, Cohort]:
    """Split by enrollment year; records in neither year set are left out."""
    train_years, test_years = set(train_years), set(test_years)
    overlap = train_years & test_years
    if overlap:
        raise CohortError(f"train and test years overlap: {sorted(overlap)}")
    train = [i for i, r in enumerate(cohort.records) if r.year in train_years]
    test = [i for i, r in enumerate(cohort.records) if r.year in test_years]
    if not train or not test:
        raise CohortError(f"temporal split leaves an empty side (train={len(train)}, test={len(test)})")
    return cohort.subset(train), cohort.subset(test)


def partition(cohort: Cohort, spec: GroupSpec, training_reference: Cohort | None = None,
              cutoff: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays of the (first, second) groups of ``spec``.

    A median cutoff is taken from ``training_reference``, unless an already
    resolved ``cutoff`` is passed. Records tied at the cutoff fall on the
    ``<=`` side.
    """
    attr = spec.rule.attr
    if attr not in CSV_COLUMNS:
        raise CohortError(f"spec {spec.name!r}: unknown attribute {attr!r}")
    values = cohort.column(attr) if len(cohort) else np.array([])
    if isinstance(spec.rule, AttributeEquals):
        first = values == spec.rule.value
    else:
        if cutoff is None:
            cutoff = spec.resolve_cutoff(training_reference)
        le = values.astype(float) <= cutoff
        first = le if spec.rule.direction == "le" else ~le
    first = np.asarray(first, dtype=bool)
    return np.flatnonzero(first), np.flatnonzero(~first)


def base_rate(cohort: Cohort, task: OutcomeTask, indices: Sequence[int] | np.ndarray | None = None) -> float:
    """Fraction of positive outcomes among ``indices`` (all records if None)."""
    idx = np.arange(len(cohort)) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise CohortError("base rate of an empty index set is undefined")
    labels = np.array([task.label(cohort.records[i]) for i in idx], dtype=float)
    return float(labels.mean())
