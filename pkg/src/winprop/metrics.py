"""Ranking metrics: ROC-AUC, cumulative gain curves, and weekly reports."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .assembly import label_snapshots
from .datastore import WEEKS_PER_QUARTER
from .errors import MissingRatingError, UndefinedMetricError


@dataclass(frozen=True)
class ScoredOutcome:
    lead_id: str
    score: float
    label: int
    week: int = 0
    segment: str = ""

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class GainCurve:
    points: tuple[tuple[float, float], ...]
    gain_score: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fraction_contacted", "fraction_wins"])
        for x, y in self.points:
            w.writerow([repr(x), repr(y)])
        return buf.getvalue()


def _arrays(scored):
    scores = np.array([s.score for s in scored], dtype=float)
    labels = np.array([s.label for s in scored], dtype=int)
    return scores, labels


def roc_auc(scored) -> float:
    """Probability a random positive outscores a random negative, ties counting half.

    Computed from average ranks (Mann-Whitney U).
    """
    scores, labels = _arrays(scored)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"ROC-AUC needs both classes (got {n_pos} pos, {n_neg} neg)")
    ranks = rankdata(scores, method="average")
    u = float(ranks[labels == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def ranked(scored):
    """Sort by score descending; ties ordered by lead_id, then week."""
    return sorted(scored, key=lambda s: (-s.score, s.lead_id, s.week))


def gain_curve(scored) -> GainCurve:
    """Cumulative gain curve and the trapezoidal area under it.

    After contacting the top ``k`` of ``n`` leads the curve is at
    ``(k/n, wins among them / total wins)``.
    """
    order = ranked(scored)
    n = len(order)
    total = sum(s.label for s in order)
    if total == 0:
        raise UndefinedMetricError("gain curve needs at least one positive")
    points = [(0.0, 0.0)]
    hits = 0
    for k, s in enumerate(order, start=1):
        hits += s.label
        points.append((k / n, hits / total))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return GainCurve(tuple(points), area)


def gain_score(scored) -> float:
    return gain_curve(scored).gain_score


METRICS = {"gain": gain_score, "auc": roc_auc}


def scored_rows(rows, scores, segment="geography") -> list[ScoredOutcome]:
    """Pair labeled rows with scores in the same order."""
    if len(rows) != len(scores):
        raise ValueError("rows and scores differ in length")
    return [
        ScoredOutcome(
            r.snapshot.lead_id,
            float(p),
            r.label,
            r.snapshot.week,
            r.snapshot.categoricals.get(segment, ""),
        )
        for r, p in zip(rows, scores)
    ]


def seller_baseline(snapshots, outcomes, segment="geography") -> list[ScoredOutcome]:
    """Rank leads by the seller's own rating, labeled like the model's rows."""
    rows = label_snapshots(snapshots, outcomes)
    missing = [r.snapshot.lead_id for r in rows if "seller_rating" not in r.snapshot.continuous]
    if missing:
        raise MissingRatingError(missing)
    return scored_rows(rows, [r.snapshot.continuous["seller_rating"] for r in rows], segment)


@dataclass
class EvalReport:
    metric: str
    segments: list[str]
    weeks: list[int]
    cells: dict = field(default_factory=dict)
    averages: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)


def weekly_report(scored, metric: str = "gain", weeks=range(1, WEEKS_PER_QUARTER + 1), segments=None) -> EvalReport:
    """One metric value per (segment, week); ``None`` marks an undefined cell.

    Each segment's average is the mean of its defined weekly cells.
    """
    fn = METRICS[metric]
    groups: dict = {}
    for s in scored:
        groups.setdefault((s.segment, s.week), []).append(s)
    if segments is None:
        segments = sorted({s.segment for s in scored})
    weeks = list(weeks)
    report = EvalReport(metric, list(segments), weeks)
    for seg in report.segments:
        defined = []
        for wk in weeks:
            group = groups.get((seg, wk), [])
            report.counts[(seg, wk)] = (len(group), sum(s.label for s in group))
            try:
                value = fn(group)
            except UndefinedMetricError:
                value = None
            report.cells[(seg, wk)] = value
            if value is not None:
                defined.append(value)
        report.averages[seg] = sum(defined) / len(defined) if defined else None
    return report


def _fmt(value):
    return "NA" if value is None else f"{value:.3f}"


def report_csv(*blocks) -> str:
    """Weekly table as CSV: one row per week, one column per segment.

    ``blocks`` are EvalReports or ``(name, EvalReport)`` pairs. Each block
    contributes its week rows followed by an average row; with a single
    unnamed block the average row is labeled ``average``, otherwise it carries
    the block name (e.g. ``model``, ``seller``).
    """
    named = [b if isinstance(b, tuple) else ("average", b) for b in blocks]
    segments = named[0][1].segments
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["week"] + segments)
    for name, rep in named:
        for wk in rep.weeks:
            w.writerow([wk] + [_fmt(rep.cells.get((seg, wk))) for seg in segments])
        w.writerow([name] + [_fmt(rep.averages.get(seg)) for seg in segments])
    return buf.getvalue()
