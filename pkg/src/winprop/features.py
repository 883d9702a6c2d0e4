"""Feature vocabulary and sparse encoding of lead snapshots.

Three blocks of columns, in this order:

* unary: one-hot ``(attribute, category)`` indicators and standardized
  continuous attributes;
* week interactions: the week number times the indicator of each
  ``(attribute, category)`` of an interacted categorical attribute;
* week interactions of interacted continuous attributes (week times the
  standardized value).

Attribute names and categories are sorted before ids are assigned, so the
same training data always yields the same column map.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigurationError, RareCategoryWarning, SchemaMismatchError

OTHER = "<OTHER>"
QUARTER_ATTRIBUTE = "quarter_of_year"


@dataclass(frozen=True)
class EncoderConfig:
    interaction_attributes: tuple[str, ...] = ("stage", "owner", QUARTER_ATTRIBUTE, "lead_age")
    min_category_count: int = 5
    include_quarter_of_year: bool = True
    exclude: tuple[str, ...] = ("seller_rating",)

    def __post_init__(self):
        if self.min_category_count < 1:
            raise ValueError("min_category_count must be >= 1")


@dataclass(frozen=True)
class EncodedRow:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    label: int | None = None

    @property
    def pairs(self):
        return list(zip(self.indices, self.values))


@dataclass(frozen=True, eq=False)
class FeatureVocabulary:
    unary_index: dict
    continuous_index: dict
    interaction_index: dict
    continuous_interaction_index: dict
    standardization: dict
    total_columns: int
    categorical_attributes: tuple[str, ...]
    continuous_attributes: tuple[str, ...]
    excluded: tuple[str, ...] = ()
    quarter_of_year: bool = False
    fingerprint: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", _fingerprint(self._content()))

    @classmethod
    def from_terms(
        cls,
        categories,
        continuous,
        interactions=(),
        standardization=None,
        *,
        categorical_attributes=None,
        continuous_attributes=None,
        excluded=(),
        quarter_of_year=False,
    ):
        """Assign column ids to the given terms.

        ``categories`` maps attribute -> categories; ``continuous`` lists the
        continuous columns; ``interactions`` names attributes (of either kind)
        interacted with week. ``standardization`` maps continuous attribute ->
        (mean, std) and defaults to the identity transform.
        """
        standardization = dict(standardization or {})
        col = 0
        unary = {}
        for attr in sorted(categories):
            for cat in sorted(set(categories[attr])):
                unary[(attr, cat)] = col
                col += 1
        cont = {}
        for attr in sorted(continuous):
            cont[attr] = col
            standardization.setdefault(attr, (0.0, 1.0))
            col += 1
        inter = {}
        for attr in sorted(a for a in interactions if a in categories):
            for cat in sorted(set(categories[attr])):
                inter[(attr, cat)] = col
                col += 1
        cont_inter = {}
        for attr in sorted(a for a in interactions if a in cont):
            cont_inter[attr] = col
            col += 1
        standardization = {a: tuple(map(float, standardization[a])) for a in sorted(cont)}
        return cls(
            unary_index=unary,
            continuous_index=cont,
            interaction_index=inter,
            continuous_interaction_index=cont_inter,
            standardization=standardization,
            total_columns=col,
            categorical_attributes=tuple(sorted(categorical_attributes or categories)),
            continuous_attributes=tuple(sorted(continuous_attributes or continuous)),
            excluded=tuple(sorted(excluded)),
            quarter_of_year=bool(quarter_of_year),
        )

    @property
    def interaction_columns(self) -> list[int]:
        return sorted(list(self.interaction_index.values()) + list(self.continuous_interaction_index.values()))

    def column_names(self) -> list[str]:
        names = [""] * self.total_columns
        for (a, c), i in self.unary_index.items():
            names[i] = f"{a}={c}"
        for a, i in self.continuous_index.items():
            names[i] = a
        for (a, c), i in self.interaction_index.items():
            names[i] = f"week*{a}={c}"
        for a, i in self.continuous_interaction_index.items():
            names[i] = f"week*{a}"
        return names

    def _content(self):
        return {
            "unary_index": [[a, c, i] for (a, c), i in sorted(self.unary_index.items(), key=lambda t: t[1])],
            "continuous_index": [[a, i] for a, i in sorted(self.continuous_index.items(), key=lambda t: t[1])],
            "interaction_index": [
                [a, c, i] for (a, c), i in sorted(self.interaction_index.items(), key=lambda t: t[1])
            ],
            "continuous_interaction_index": [
                [a, i] for a, i in sorted(self.continuous_interaction_index.items(), key=lambda t: t[1])
            ],
            "standardization": [[a, m, s] for a, (m, s) in sorted(self.standardization.items())],
            "total_columns": self.total_columns,
            "categorical_attributes": list(self.categorical_attributes),
            "continuous_attributes": list(self.continuous_attributes),
            "excluded": list(self.excluded),
            "quarter_of_year": self.quarter_of_year,
        }

    def to_dict(self) -> dict:
        d = self._content()
        d["fingerprint"] = self.fingerprint
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVocabulary":
        vocab = cls(
            unary_index={(a, c): int(i) for a, c, i in d["unary_index"]},
            continuous_index={a: int(i) for a, i in d["continuous_index"]},
            interaction_index={(a, c): int(i) for a, c, i in d["interaction_index"]},
            continuous_interaction_index={a: int(i) for a, i in d["continuous_interaction_index"]},
            standardization={a: (float(m), float(s)) for a, m, s in d["standardization"]},
            total_columns=int(d["total_columns"]),
            categorical_attributes=tuple(d["categorical_attributes"]),
            continuous_attributes=tuple(d["continuous_attributes"]),
            excluded=tuple(d.get("excluded", ())),
            quarter_of_year=bool(d.get("quarter_of_year", False)),
        )
        _check_ids(vocab)
        return vocab

    def __eq__(self, other):
        if not isinstance(other, FeatureVocabulary):
            return NotImplemented
        return self._content() == other._content()

    __hash__ = None


def _fingerprint(content) -> str:
    blob = json.dumps(content, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _check_ids(vocab):
    ids = (
        list(vocab.unary_index.values())
        + list(vocab.continuous_index.values())
        + list(vocab.interaction_index.values())
        + list(vocab.continuous_interaction_index.values())
    )
    if sorted(ids) != list(range(vocab.total_columns)):
        raise ValueError("vocabulary column ids must be exactly 0..total_columns-1")


def _snapshots(rows):
    out = []
    for r in rows:
        out.append(getattr(r, "snapshot", r))
    return out


def categorical_values(snapshot, quarter_of_year: bool) -> dict:
    values = dict(snapshot.categoricals)
    if quarter_of_year:
        values[QUARTER_ATTRIBUTE] = snapshot.quarter.label
    return values


def fit_vocabulary(training, config: EncoderConfig = EncoderConfig()) -> FeatureVocabulary:
    """Fit the column map and standardization statistics on training rows.

    ``training`` is a TrainingSet or a sequence of labeled rows / snapshots.
    Categories seen fewer than ``min_category_count`` times share an OTHER
    column; continuous attributes with zero variance are dropped.
    """
    rows = getattr(training, "rows", training)
    snaps = _snapshots(rows)
    if not snaps:
        raise ConfigurationError("cannot fit a vocabulary on an empty training set")
    excluded = set(config.exclude)

    counts: dict[str, Counter] = {}
    cont_values: dict[str, list] = {}
    for s in snaps:
        for a, c in categorical_values(s, config.include_quarter_of_year).items():
            if a not in excluded:
                counts.setdefault(a, Counter())[c] += 1
        for a, v in s.continuous.items():
            if a not in excluded:
                cont_values.setdefault(a, []).append(v)

    known = set(counts) | set(cont_values)
    unknown = [a for a in config.interaction_attributes if a not in known]
    if unknown:
        raise ConfigurationError(f"interaction attributes not in training data: {unknown}")

    categories = {}
    for a, counter in counts.items():
        kept = [c for c, n in counter.items() if n >= config.min_category_count]
        if len(kept) < len(counter):
            kept.append(OTHER)
        if kept == [OTHER]:
            warnings.warn(
                f"all categories of {a!r} are below min_category_count="
                f"{config.min_category_count}; using a single OTHER column",
                RareCategoryWarning,
                stacklevel=2,
            )
        categories[a] = kept

    standardization = {}
    for a, vals in cont_values.items():
        if not vals:
            continue
        arr = np.asarray(vals, dtype=float)
        mean = float(np.mean(arr))
        std = float(np.sqrt(np.mean((arr - mean) ** 2)))
        if std > 0:
            standardization[a] = (mean, std)

    return FeatureVocabulary.from_terms(
        categories,
        list(standardization),
        config.interaction_attributes,
        standardization,
        categorical_attributes=sorted(categories),
        continuous_attributes=sorted(cont_values),
        excluded=config.exclude,
        quarter_of_year=config.include_quarter_of_year,
    )


def encode(snapshot, vocab: FeatureVocabulary, week: int | None = None, include_interactions: bool = True, label=None) -> EncodedRow:
    """Sparse feature vector of ``snapshot`` as observed in ``week``.

    ``week`` defaults to the snapshot's own week. Unseen categories map to the
    attribute's OTHER column when there is one and are omitted otherwise;
    missing continuous values encode as the training mean (zero).
    """
    if week is None:
        week = snapshot.week
    cats = categorical_values(snapshot, vocab.quarter_of_year)
    entries = {}
    for a, c in cats.items():
        if (a, c) in vocab.unary_index:
            key = (a, c)
        elif (a, OTHER) in vocab.unary_index:
            key = (a, OTHER)
        else:
            continue
        entries[vocab.unary_index[key]] = 1.0
        if include_interactions and key in vocab.interaction_index:
            entries[vocab.interaction_index[key]] = float(week)
    for a, col in vocab.continuous_index.items():
        x = snapshot.continuous.get(a)
        if x is None:
            continue
        mean, std = vocab.standardization[a]
        z = (x - mean) / std
        if z == 0.0:
            continue
        entries[col] = z
        if include_interactions and a in vocab.continuous_interaction_index:
            entries[vocab.continuous_interaction_index[a]] = week * z
    idx = tuple(sorted(entries))
    return EncodedRow(idx, tuple(entries[i] for i in idx), label)


def schema_differences(vocab: FeatureVocabulary, snapshot) -> list[tuple[str, str]]:
    """(attribute, problem) pairs for a snapshot that does not fit ``vocab``."""
    problems = []
    cats = {a for a in snapshot.categoricals if a not in vocab.excluded}
    conts = {a for a in snapshot.continuous if a not in vocab.excluded}
    expected = {a for a in vocab.categorical_attributes if not (vocab.quarter_of_year and a == QUARTER_ATTRIBUTE)}
    for a in sorted(expected | cats | conts):
        if a in cats and a not in expected:
            problems.append((a, "categorical attribute not in vocabulary"))
        elif a in conts and a not in vocab.continuous_attributes:
            problems.append((a, "continuous attribute not in vocabulary"))
        elif a in expected and a not in cats:
            problems.append((a, "categorical attribute missing from row"))
    return problems


def build_design_matrix(rows, vocab: FeatureVocabulary, include_interactions: bool = True):
    """Encode rows in order; returns (encoded rows, label array)."""
    encoded = []
    labels = []
    for r in rows:
        s = getattr(r, "snapshot", r)
        problems = schema_differences(vocab, s)
        if problems:
            raise SchemaMismatchError(*problems[0])
        y = getattr(r, "label", None)
        encoded.append(encode(s, vocab, include_interactions=include_interactions, label=y))
        labels.append(y)
    return encoded, np.asarray(labels, dtype=float)


def to_csr(encoded, n_columns: int) -> sparse.csr_matrix:
    indptr = [0]
    indices = []
    data = []
    for row in encoded:
        indices.extend(row.indices)
        data.extend(row.values)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(encoded), n_columns),
    )
