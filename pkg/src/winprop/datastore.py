"""Weekly lead snapshots, quarter-end outcomes, and their CSV formats.

A snapshot file holds one row per lead per week::

    lead_id,quarter,week,<categoricals...>,<continuous...>

and an outcome file one row per lead::

    lead_id,quarter,status[,week]

where ``status`` is ``won``, ``lost`` or ``pending`` and the optional ``week``
is the week in which the disposition was recorded (blank = quarter end).
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    DuplicateSnapshotError,
    MissingQuarterError,
    RowError,
    SchemaError,
    WinpropError,
)

WEEKS_PER_QUARTER = 13
STATUSES = ("won", "lost", "pending")

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")


@dataclass(frozen=True, order=True)
class Quarter:
    year: int
    index: int

    def __post_init__(self):
        if self.index not in (1, 2, 3, 4):
            raise ValueError(f"quarter index must be in 1..4, got {self.index}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = _QUARTER_RE.match(text.strip())
        if m is None:
            raise ValueError(f"invalid quarter {text!r}; expected YYYYQn")
        return cls(int(m.group(1)), int(m.group(2)))

    def shift(self, n: int) -> "Quarter":
        """The quarter ``n`` quarters later (earlier for negative ``n``)."""
        k = self.year * 4 + (self.index - 1) + n
        return Quarter(k // 4, k % 4 + 1)

    @property
    def label(self) -> str:
        """Quarter-of-year label, e.g. ``"Q1"``; independent of the year."""
        return f"Q{self.index}"

    def __str__(self):
        return f"{self.year:04d}Q{self.index}"


def week_of(day_of_quarter: int) -> int:
    """Week index 1..13 for a 1-based day of the quarter.

    Days are binned into 7-day weeks; the overflow days at the end of a
    91/92-day quarter fold into week 13.
    """
    if day_of_quarter < 1:
        raise ValueError(f"day_of_quarter must be >= 1, got {day_of_quarter}")
    return min((day_of_quarter - 1) // 7 + 1, WEEKS_PER_QUARTER)


@dataclass(frozen=True)
class LeadSnapshot:
    lead_id: str
    quarter: Quarter
    week: int
    categoricals: Mapping[str, str] = field(default_factory=dict)
    continuous: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        both = set(self.categoricals) & set(self.continuous)
        if both:
            raise ValueError(f"attributes in both maps: {sorted(both)}")

    @property
    def key(self):
        return (self.lead_id, self.quarter, self.week)


@dataclass(frozen=True)
class OutcomeRecord:
    lead_id: str
    quarter: Quarter
    status: str
    week: int | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")


@dataclass(frozen=True)
class SchemaSpec:
    """Column routing for snapshot files.

    ``optional_continuous`` columns are parsed when present in the header and
    may be blank; the required continuous columns may be blank too (blank
    values are left out of the snapshot and imputed downstream).
    """

    categoricals: tuple[str, ...]
    continuous: tuple[str, ...]
    optional_continuous: tuple[str, ...] = ("seller_rating",)
    extra_columns: str = "ignore"

    def __post_init__(self):
        object.__setattr__(self, "categoricals", tuple(self.categoricals))
        object.__setattr__(self, "continuous", tuple(self.continuous))
        object.__setattr__(self, "optional_continuous", tuple(self.optional_continuous))
        if not self.categoricals or not self.continuous:
            raise ValueError("schema needs at least one categorical and one continuous column")
        names = list(self.categoricals) + list(self.continuous) + list(self.optional_continuous)
        if len(set(names)) != len(names):
            raise ValueError("schema column sets must be disjoint")
        if set(names) & set(KEY_COLUMNS):
            raise ValueError(f"{KEY_COLUMNS} are reserved column names")
        if self.extra_columns not in ("ignore", "reject"):
            raise ValueError("extra_columns must be 'ignore' or 'reject'")


KEY_COLUMNS = ("lead_id", "quarter", "week")

DEFAULT_SCHEMA = SchemaSpec(
    categoricals=(
        "geography",
        "deal_size",
        "sector",
        "industry",
        "product",
        "stage",
        "new_client",
        "owner",
    ),
    continuous=("lead_age",),
)


def _read_text(stream) -> str:
    data = stream.read()
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8-sig")
    return data


def _parse_float(text, line, column):
    try:
        value = float(text)
    except ValueError:
        raise RowError(line, f"column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise RowError(line, f"column {column!r}: non-finite value {text!r}")
    return value


def _parse_int(text, line, column):
    try:
        return int(text)
    except ValueError:
        raise RowError(line, f"column {column!r}: cannot parse {text!r} as an integer") from None


def _parse_quarter(text, line):
    try:
        return Quarter.parse(text)
    except ValueError as exc:
        raise RowError(line, str(exc)) from None


def _rows(text):
    """Yield (line_number, header_or_row) with physical line numbers."""
    reader = csv.reader(io.StringIO(text, newline=""))
    for row in reader:
        if not row or (len(row) == 1 and row[0] == ""):
            continue
        yield reader.line_num, row


def parse_snapshot_file(stream, schema: SchemaSpec = DEFAULT_SCHEMA) -> list[LeadSnapshot]:
    """Parse a snapshot CSV (binary or text stream) into snapshots, in row order."""
    rows = _rows(_read_text(stream))
    try:
        _, header = next(rows)
    except StopIteration:
        raise SchemaError("snapshot file has no header row") from None
    header = [h.strip() for h in header]
    for column in KEY_COLUMNS + schema.categoricals + schema.continuous:
        if column not in header:
            raise SchemaError(f"missing required column {column!r}")
    known = set(KEY_COLUMNS) | set(schema.categoricals) | set(schema.continuous) | set(
        schema.optional_continuous
    )
    extra = [h for h in header if h not in known]
    if extra and schema.extra_columns == "reject":
        raise SchemaError(f"unexpected columns: {extra}")
    pos = {name: i for i, name in enumerate(header)}
    continuous_cols = [c for c in schema.continuous + schema.optional_continuous if c in pos]

    batch = []
    seen: dict[tuple, int] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise RowError(line, f"expected {len(header)} fields, got {len(row)}")
        cats = {c: row[pos[c]] for c in schema.categoricals}
        cont = {}
        for c in continuous_cols:
            text = row[pos[c]].strip()
            if text:
                cont[c] = _parse_float(text, line, c)
        snap = LeadSnapshot(
            lead_id=row[pos["lead_id"]],
            quarter=_parse_quarter(row[pos["quarter"]], line),
            week=_parse_int(row[pos["week"]], line, "week"),
            categoricals=cats,
            continuous=cont,
        )
        if snap.key in seen:
            raise DuplicateSnapshotError(
                (snap.lead_id, str(snap.quarter), snap.week), (seen[snap.key], line)
            )
        seen[snap.key] = line
        batch.append(snap)
    return batch


def format_float(value: float) -> str:
    return repr(float(value))


def snapshot_columns(batch: Iterable[LeadSnapshot], schema: SchemaSpec | None = None):
    """(categorical, continuous) column lists used when writing ``batch``."""
    batch = list(batch)
    present = set()
    for s in batch:
        present.update(s.continuous)
    if schema is None:
        cats = sorted({k for s in batch for k in s.categoricals})
        return cats, sorted(present)
    optional = [c for c in schema.optional_continuous if c in present]
    return list(schema.categoricals), list(schema.continuous) + optional


def write_snapshot_csv(batch, stream, schema: SchemaSpec | None = None, extra=None):
    """Write snapshots as CSV text. ``extra`` maps column name -> per-row values."""
    batch = list(batch)
    cats, cont = snapshot_columns(batch, schema)
    extra = extra or {}
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(list(KEY_COLUMNS) + cats + cont + list(extra))
    for i, s in enumerate(batch):
        row = [s.lead_id, str(s.quarter), str(s.week)]
        row += [s.categoricals.get(c, "") for c in cats]
        row += [format_float(s.continuous[c]) if c in s.continuous else "" for c in cont]
        row += [str(values[i]) for values in extra.values()]
        writer.writerow(row)


def parse_outcome_file(stream) -> list[OutcomeRecord]:
    rows = _rows(_read_text(stream))
    try:
        _, header = next(rows)
    except StopIteration:
        raise SchemaError("outcome file has no header row") from None
    header = [h.strip() for h in header]
    for column in ("lead_id", "quarter", "status"):
        if column not in header:
            raise SchemaError(f"missing required column {column!r}")
    pos = {name: i for i, name in enumerate(header)}
    records = []
    seen: dict[tuple, int] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise RowError(line, f"expected {len(header)} fields, got {len(row)}")
        status = row[pos["status"]]
        if status not in STATUSES:
            raise RowError(line, f"status must be one of {STATUSES}, got {status!r}")
        week = None
        if "week" in pos and row[pos["week"]].strip():
            week = _parse_int(row[pos["week"]], line, "week")
        rec = OutcomeRecord(row[pos["lead_id"]], _parse_quarter(row[pos["quarter"]], line), status, week)
        key = (rec.lead_id, rec.quarter)
        if key in seen:
            raise WinpropError(
                f"duplicate outcome for ({rec.lead_id}, {rec.quarter}) on lines {seen[key]}, {line}"
            )
        seen[key] = line
        records.append(rec)
    return records


def write_outcome_csv(records, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["lead_id", "quarter", "status", "week"])
    for r in records:
        writer.writerow([r.lead_id, str(r.quarter), r.status, "" if r.week is None else r.week])


@dataclass(frozen=True)
class Violation:
    row: int
    lead_id: str
    message: str


def validate_batch(batch, schema: SchemaSpec = DEFAULT_SCHEMA) -> list[Violation]:
    """Report per-row invariant violations; an empty list means the batch is clean."""
    report = []
    seen = set()
    for i, s in enumerate(batch):
        q = s.quarter
        if not isinstance(q, Quarter) or q.index not in (1, 2, 3, 4):
            report.append(Violation(i, s.lead_id, f"unknown quarter {q!r}"))
        if not 1 <= s.week <= WEEKS_PER_QUARTER:
            report.append(Violation(i, s.lead_id, f"week out of 1..{WEEKS_PER_QUARTER}"))
        age = s.continuous.get("lead_age")
        if age is not None and age < 0:
            report.append(Violation(i, s.lead_id, "lead_age < 0"))
        rating = s.continuous.get("seller_rating")
        if rating is not None and not 0.0 <= rating <= 1.0:
            report.append(Violation(i, s.lead_id, "seller_rating outside [0, 1]"))
        for c in schema.categoricals:
            if c not in s.categoricals:
                report.append(Violation(i, s.lead_id, f"missing categorical {c!r}"))
        both = set(s.categoricals) & set(s.continuous)
        if both:
            report.append(Violation(i, s.lead_id, f"attribute in both maps: {sorted(both)}"))
        if s.key in seen:
            report.append(Violation(i, s.lead_id, "duplicate (lead_id, quarter, week)"))
        seen.add(s.key)
    return report


# -- on-disk store: one snapshot and one outcome file per quarter -------------

def snapshot_path(directory, quarter: Quarter) -> Path:
    return Path(directory) / f"snapshots_{quarter}.csv"


def outcome_path(directory, quarter: Quarter) -> Path:
    return Path(directory) / f"outcomes_{quarter}.csv"


def read_snapshots(path, schema: SchemaSpec = DEFAULT_SCHEMA) -> list[LeadSnapshot]:
    with open(path, "rb") as fh:
        return parse_snapshot_file(fh, schema)


def read_outcomes(path) -> list[OutcomeRecord]:
    with open(path, "rb") as fh:
        return parse_outcome_file(fh)


def load_quarter(directory, quarter: Quarter, schema: SchemaSpec = DEFAULT_SCHEMA):
    """(snapshots, outcomes) for one quarter of an on-disk store."""
    sp, op = snapshot_path(directory, quarter), outcome_path(directory, quarter)
    if not sp.exists():
        raise MissingQuarterError(quarter, "snapshot file")
    if not op.exists():
        raise MissingQuarterError(quarter, "outcome file")
    return read_snapshots(sp, schema), read_outcomes(op)


def write_quarter(directory, quarter: Quarter, snapshots, outcomes, schema=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(snapshot_path(directory, quarter), "w", encoding="utf-8", newline="") as fh:
        write_snapshot_csv(snapshots, fh, schema)
    with open(outcome_path(directory, quarter), "w", encoding="utf-8", newline="") as fh:
        write_outcome_csv(outcomes, fh)
