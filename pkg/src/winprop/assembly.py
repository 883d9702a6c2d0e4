"""Labeled training rows from weekly snapshots and quarter-end outcomes."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .datastore import (
    DEFAULT_SCHEMA,
    LeadSnapshot,
    OutcomeRecord,
    Quarter,
    SchemaSpec,
    _read_text,
    parse_snapshot_file,
    write_snapshot_csv,
)
from .errors import (
    ConfigurationError,
    DegenerateLabelsError,
    MissingQuarterError,
    PolicyError,
    RowError,
    UnmatchedLeadsWarning,
)


@dataclass(frozen=True)
class LabeledRow:
    snapshot: LeadSnapshot
    label: int


@dataclass(frozen=True)
class TrainingSet:
    rows: tuple[LabeledRow, ...]
    source_quarters: frozenset
    target_quarter: Quarter | None

    @property
    def n_positive(self):
        return sum(r.label for r in self.rows)

    @property
    def n_negative(self):
        return len(self.rows) - self.n_positive

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class CompositionPolicy:
    use_seasonality: bool = True
    use_recency: bool = True
    extra_quarters: tuple[Quarter, ...] = field(default_factory=tuple)


def label_snapshots(
    snapshots: Sequence[LeadSnapshot], outcomes: Sequence[OutcomeRecord]
) -> list[LabeledRow]:
    """Attach each lead's quarter-end label to its weekly snapshots.

    Won leads contribute only the snapshots taken before the week the win was
    recorded; lost and pending leads contribute every snapshot with label 0.
    Snapshots of leads without an outcome record are dropped, with an
    :class:`UnmatchedLeadsWarning` giving the number of leads affected.
    """
    if not snapshots:
        return []
    if not outcomes:
        raise ConfigurationError("no outcome records supplied for labeling")
    by_key = {(o.lead_id, o.quarter): o for o in outcomes}
    rows = []
    unmatched = set()
    for s in snapshots:
        outcome = by_key.get((s.lead_id, s.quarter))
        if outcome is None:
            unmatched.add((s.lead_id, s.quarter))
            continue
        if outcome.status == "won":
            if outcome.week is not None and s.week >= outcome.week:
                continue
            rows.append(LabeledRow(s, 1))
        else:
            rows.append(LabeledRow(s, 0))
    if unmatched:
        warnings.warn(
            f"dropped snapshots of {len(unmatched)} lead(s) with no outcome record",
            UnmatchedLeadsWarning,
            stacklevel=2,
        )
    return rows


def resolve_sources(target: Quarter, policy: CompositionPolicy) -> list[Quarter]:
    """Source quarters for ``target``, sorted.

    Seasonality adds the same quarter one year back, recency the quarter
    immediately before the target.
    """
    sources = set(policy.extra_quarters)
    if policy.use_seasonality:
        sources.add(target.shift(-4))
    if policy.use_recency:
        sources.add(target.shift(-1))
    sources.discard(target)
    if not sources:
        raise PolicyError(f"composition policy resolves to no source quarters for {target}")
    return sorted(sources)


def compose_training_set(
    target: Quarter,
    policy: CompositionPolicy,
    snapshots: Mapping[Quarter, Sequence[LeadSnapshot]],
    outcomes: Mapping[Quarter, Sequence[OutcomeRecord]],
) -> TrainingSet:
    sources = resolve_sources(target, policy)
    rows = []
    for q in sources:
        if q not in snapshots:
            raise MissingQuarterError(q, "snapshots")
        if q not in outcomes:
            raise MissingQuarterError(q, "outcomes")
        rows.extend(label_snapshots(snapshots[q], outcomes[q]))
    ts = TrainingSet(tuple(rows), frozenset(sources), target)
    check_labels(ts)
    return ts


def check_labels(ts: TrainingSet):
    if not ts.rows:
        raise DegenerateLabelsError("training set is empty")
    pos = ts.n_positive
    if pos == 0 or pos == len(ts.rows):
        which = "won" if pos else "non-won"
        raise DegenerateLabelsError(
            f"training set has only {which} rows ({len(ts.rows)} rows); need both classes"
        )


def write_training_csv(ts: TrainingSet, stream, schema: SchemaSpec | None = DEFAULT_SCHEMA):
    snaps = [r.snapshot for r in ts.rows]
    write_snapshot_csv(snaps, stream, schema, extra={"label": [r.label for r in ts.rows]})


def parse_training_file(stream, schema: SchemaSpec = DEFAULT_SCHEMA, target=None) -> TrainingSet:
    """Inverse of :func:`write_training_csv`."""
    text = _read_text(stream)
    schema = SchemaSpec(
        schema.categoricals, schema.continuous, schema.optional_continuous, "ignore"
    )
    snaps = parse_snapshot_file(io.StringIO(text), schema)
    reader = csv.DictReader(io.StringIO(text, newline=""))
    if reader.fieldnames is None or "label" not in reader.fieldnames:
        raise ConfigurationError("training file has no 'label' column")
    labels = []
    for rec in reader:
        if rec["label"] not in ("0", "1"):
            raise RowError(reader.line_num, f"label must be 0 or 1, got {rec['label']!r}")
        labels.append(int(rec["label"]))
    rows = tuple(LabeledRow(s, y) for s, y in zip(snaps, labels))
    return TrainingSet(rows, frozenset(s.quarter for s in snaps), target)
