"""Seeded synthetic sales pipeline with a known logistic ground truth.

Every lead gets static attributes, a creation week and a lead age, and is
snapshotted weekly while open. The ground truth fixes, for each open
lead-week, the probability ``q_w = sigmoid(logit(x, w))`` that the lead is won
later in the quarter. Weekly win hazards are derived from it,

    h_{w+1} = (q_w - q_{w+1}) / (1 - q_{w+1}),   h_end = q_13,

so the quarter-end label of a week-``w`` snapshot is won with probability
exactly ``q_w``, which is the quantity the trained model estimates. This
requires ``q_w`` to be non-increasing in ``w`` (chances fade toward quarter
end); coefficients that violate it are rejected.

Each lead draws from its own PCG64 stream keyed by (seed, quarter, lead
number), so adding leads leaves the draws of existing leads unchanged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .assembly import label_snapshots
from .datastore import WEEKS_PER_QUARTER, LeadSnapshot, OutcomeRecord, Quarter, write_quarter
from .errors import ConfigurationError, WinpropError
from .features import QUARTER_ATTRIBUTE, FeatureVocabulary, encode
from .metrics import scored_rows
from .model import LogisticModel

TRUTH_FORMAT_VERSION = 1

DEFAULT_CARDINALITIES = {
    "geography": 8,
    "deal_size": 4,
    "sector": 3,
    "industry": 6,
    "product": 5,
    "stage": 5,
    "new_client": 2,
    "owner": 10,
}
INTERACTED = ("stage", "owner", QUARTER_ATTRIBUTE)

_GEOGRAPHIES = ("GCG", "Japan", "AP", "LA", "CEE", "NA", "MEA", "EU")
_PREFIX = {"deal_size": "D", "sector": "SEC", "industry": "IND", "product": "P", "stage": "S", "owner": "O"}


def category_names(attribute: str, k: int) -> list[str]:
    if attribute == "geography" and k <= len(_GEOGRAPHIES):
        return list(_GEOGRAPHIES[:k])
    if attribute == "new_client" and k == 2:
        return ["N", "Y"]
    if attribute == QUARTER_ATTRIBUTE:
        return ["Q1", "Q2", "Q3", "Q4"]
    prefix = _PREFIX.get(attribute, attribute[:3].upper())
    width = len(str(k))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(k)]


@dataclass(frozen=True)
class CoefficientSpec:
    """True coefficients on raw (unstandardized) attributes.

    ``unary`` and ``interaction`` map attribute -> category -> weight, with
    ``quarter_of_year`` (categories Q1..Q4) usable like any other attribute.
    ``continuous`` and ``continuous_interaction`` are per-day weights of
    ``lead_age``. Interaction weights multiply the week number. With
    ``intercept=None`` the intercept is calibrated to the target positive rate.
    """

    unary: dict = field(default_factory=dict)
    continuous: dict = field(default_factory=dict)
    interaction: dict = field(default_factory=dict)
    continuous_interaction: dict = field(default_factory=dict)
    intercept: float | None = None

    def to_dict(self):
        return {
            "unary": self.unary,
            "continuous": self.continuous,
            "interaction": self.interaction,
            "continuous_interaction": self.continuous_interaction,
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["unary"], d["continuous"], d["interaction"], d["continuous_interaction"], d["intercept"])


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 42
    leads_per_quarter: int = 1000
    quarters: tuple = (Quarter(2013, 1),)
    cardinalities: dict = field(default_factory=lambda: dict(DEFAULT_CARDINALITIES))
    coefficients: CoefficientSpec | None = None
    positive_rate: float = 0.25
    seller_rating_noise: float = 0.1
    pending_fraction: float = 0.5
    creation_weeks: int = 10
    max_initial_age: int = 180

    def __post_init__(self):
        if self.leads_per_quarter < 1:
            raise ValueError("leads_per_quarter must be >= 1")
        if not 0 < self.positive_rate < 1:
            raise ValueError("positive_rate must be in (0, 1)")
        if self.seller_rating_noise < 0:
            raise ValueError("seller_rating_noise must be >= 0")
        if not 0 <= self.pending_fraction <= 1:
            raise ValueError("pending_fraction must be in [0, 1]")
        if not 1 <= self.creation_weeks <= WEEKS_PER_QUARTER:
            raise ValueError("creation_weeks must be in 1..13")
        if not self.quarters:
            raise ValueError("at least one quarter is required")
        if any(k < 1 for k in self.cardinalities.values()):
            raise ValueError("category cardinalities must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self):
        return {
            "seed": self.seed,
            "leads_per_quarter": self.leads_per_quarter,
            "quarters": [str(q) for q in self.quarters],
            "cardinalities": dict(sorted(self.cardinalities.items())),
            "coefficients": None if self.coefficients is None else self.coefficients.to_dict(),
            "positive_rate": self.positive_rate,
            "seller_rating_noise": self.seller_rating_noise,
            "pending_fraction": self.pending_fraction,
            "creation_weeks": self.creation_weeks,
            "max_initial_age": self.max_initial_age,
        }


@dataclass
class GroundTruth:
    coefficients: CoefficientSpec
    probabilities: dict  # (lead_id, quarter, week) -> q_w
    vocab: FeatureVocabulary
    weights: np.ndarray

    @property
    def intercept(self):
        return self.coefficients.intercept

    def to_dict(self):
        return {
            "format_version": TRUTH_FORMAT_VERSION,
            "coefficients": self.coefficients.to_dict(),
            "probabilities": [[k[0], str(k[1]), k[2], p] for k, p in self.probabilities.items()],
        }


@dataclass
class Simulation:
    config: GeneratorConfig
    snapshots: dict
    outcomes: dict
    truth: GroundTruth


def _stream(*key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def draw_coefficients(config: GeneratorConfig) -> CoefficientSpec:
    """Random coefficients consistent with week-decreasing win chances."""
    rng = _stream(config.seed, 0xC0EF)
    unary, interaction = {}, {}
    attrs = sorted(config.cardinalities) + [QUARTER_ATTRIBUTE]
    for attr in attrs:
        k = 4 if attr == QUARTER_ATTRIBUTE else config.cardinalities[attr]
        names = category_names(attr, k)
        scale = 0.3 if attr == QUARTER_ATTRIBUTE else 0.7
        raw = rng.normal(0.0, scale, size=k)
        unary[attr] = dict(zip(names, (raw - raw.mean()).tolist()))
    for attr in INTERACTED:
        if attr != QUARTER_ATTRIBUTE and attr not in config.cardinalities:
            continue
        k = 4 if attr == QUARTER_ATTRIBUTE else config.cardinalities[attr]
        base = -0.04
        interaction[attr] = dict(zip(category_names(attr, k), (base * rng.uniform(0.2, 1.8, size=k)).tolist()))
    return CoefficientSpec(
        unary=unary,
        continuous={"lead_age": -float(rng.uniform(0.002, 0.006))},
        interaction=interaction,
        continuous_interaction={"lead_age": -float(rng.uniform(0.0, 3e-4))},
    )


def truth_vocabulary(coef: CoefficientSpec) -> FeatureVocabulary:
    """Vocabulary over the generator's raw terms, with identity standardization."""
    categories = {a: list(c) for a, c in coef.unary.items()}
    for a, c in coef.interaction.items():
        categories.setdefault(a, []).extend(c)
    continuous = sorted(set(coef.continuous) | set(coef.continuous_interaction))
    interactions = list(coef.interaction) + list(coef.continuous_interaction)
    return FeatureVocabulary.from_terms(
        categories,
        continuous,
        interactions,
        excluded=("seller_rating",),
        quarter_of_year=QUARTER_ATTRIBUTE in categories,
    )


def _weights(coef: CoefficientSpec, vocab: FeatureVocabulary) -> np.ndarray:
    w = np.zeros(vocab.total_columns)
    for a, cats in coef.unary.items():
        for c, v in cats.items():
            w[vocab.unary_index[(a, c)]] = v
    for a, v in coef.continuous.items():
        w[vocab.continuous_index[a]] = v
    for a, cats in coef.interaction.items():
        for c, v in cats.items():
            w[vocab.interaction_index[(a, c)]] = v
    for a, v in coef.continuous_interaction.items():
        w[vocab.continuous_interaction_index[a]] = v
    return w


def hazards(probs) -> list[float]:
    """Weekly win hazards from eventual-win probabilities of consecutive open weeks.

    ``probs[j]`` is ``q`` for the j-th open week; the result has one hazard per
    following week plus a final one for the quarter-end disposition.
    """
    out = []
    for q, q_next in zip(probs, probs[1:]):
        out.append(0.0 if q_next >= 1.0 else (q - q_next) / (1.0 - q_next))
    out.append(probs[-1])
    return out


def win_week_probabilities(probs) -> list[float]:
    """Probability the win is recorded at each step after the first open week."""
    alive = 1.0
    out = []
    for h in hazards(probs):
        out.append(alive * h)
        alive *= 1.0 - h
    return out


@dataclass
class _Lead:
    lead_id: str
    quarter: Quarter
    categoricals: dict
    created: int
    age0: int
    uniforms: np.ndarray
    coin: float
    noise: np.ndarray


def _draw_leads(config: GeneratorConfig, quarter: Quarter) -> list[_Lead]:
    leads = []
    width = max(5, len(str(config.leads_per_quarter)))
    attrs = sorted(config.cardinalities)
    for i in range(config.leads_per_quarter):
        rng = _stream(config.seed, quarter.year, quarter.index, i)
        cats = {}
        for a in attrs:
            names = category_names(a, config.cardinalities[a])
            cats[a] = names[int(rng.integers(len(names)))]
        created = int(rng.integers(1, config.creation_weeks + 1))
        age0 = int(rng.integers(0, config.max_initial_age + 1))
        uniforms = rng.random(WEEKS_PER_QUARTER + 1)
        coin = float(rng.random())
        noise = rng.standard_normal(WEEKS_PER_QUARTER)
        leads.append(_Lead(f"{quarter}-L{i:0{width}d}", quarter, cats, created, age0, uniforms, coin, noise))
    return leads


def _snapshot(lead: _Lead, week: int) -> LeadSnapshot:
    return LeadSnapshot(
        lead.lead_id,
        lead.quarter,
        week,
        dict(lead.categoricals),
        {"lead_age": float(lead.age0 + 7 * (week - lead.created))},
    )


def _lead_logits(lead, vocab, w):
    """Logits without intercept for weeks created..13."""
    out = []
    for week in range(lead.created, WEEKS_PER_QUARTER + 1):
        row = encode(_snapshot(lead, week), vocab)
        out.append(float(np.dot(w[list(row.indices)], row.values)) if row.indices else 0.0)
    return np.array(out)


def _calibrate(start_logits, target, tol=0.05):
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if float(np.mean(expit(start_logits + mid))) < target:
            lo = mid
        else:
            hi = mid
    b = (lo + hi) / 2
    achieved = float(np.mean(expit(start_logits + b)))
    if abs(achieved - target) > tol:
        raise ConfigurationError(
            f"positive rate {target} unreachable by intercept calibration; achieved {achieved:.4f}"
        )
    return b


def generate(config: GeneratorConfig = GeneratorConfig()) -> Simulation:
    coef = config.coefficients or draw_coefficients(config)
    vocab = truth_vocabulary(coef)
    w = _weights(coef, vocab)

    leads = {q: _draw_leads(config, q) for q in sorted(config.quarters)}
    logits = {lead.lead_id: _lead_logits(lead, vocab, w) for ls in leads.values() for lead in ls}
    for lead_id, z in logits.items():
        if np.any(np.diff(z) > 1e-12):
            raise ConfigurationError(
                f"coefficients make the win probability of {lead_id} rise with week; "
                "interaction and lead-age weights must keep it non-increasing"
            )
    intercept = coef.intercept
    if intercept is None:
        start = np.array([z[0] for z in logits.values()])
        intercept = _calibrate(start, config.positive_rate)
    coef = CoefficientSpec(coef.unary, coef.continuous, coef.interaction, coef.continuous_interaction, float(intercept))

    snapshots, outcomes, probabilities = {}, {}, {}
    for q, ls in leads.items():
        snaps, outs = [], []
        for lead in ls:
            qs = expit(logits[lead.lead_id] + intercept)
            hz = hazards(list(qs))
            status, win_week = None, None
            for j, week in enumerate(range(lead.created, WEEKS_PER_QUARTER + 1)):
                rating = qs[j] + config.seller_rating_noise * lead.noise[week - 1]
                snap = _snapshot(lead, week)
                snap = LeadSnapshot(
                    snap.lead_id,
                    q,
                    week,
                    snap.categoricals,
                    {**snap.continuous, "seller_rating": float(np.clip(rating, 0.0, 1.0))},
                )
                snaps.append(snap)
                probabilities[(lead.lead_id, q, week)] = float(qs[j])
                if lead.uniforms[week - 1] < hz[j]:
                    status = "won"
                    win_week = week + 1 if week < WEEKS_PER_QUARTER else None
                    break
            if status is None:
                status = "pending" if lead.coin < config.pending_fraction else "lost"
            outs.append(OutcomeRecord(lead.lead_id, q, status, win_week))
        snapshots[q], outcomes[q] = snaps, outs
    truth = GroundTruth(coef, probabilities, vocab, w)
    return Simulation(config, snapshots, outcomes, truth)


def truth_model(truth: GroundTruth) -> LogisticModel:
    """The ground truth as a LogisticModel over its own raw-term vocabulary."""
    return LogisticModel(truth.weights, truth.intercept, truth.vocab, {"ground_truth": True})


def bayes_optimal_scores(truth: GroundTruth, snapshots, outcomes, segment="geography"):
    """Score each labeled snapshot with its true win probability."""
    rows = label_snapshots(snapshots, outcomes)
    scores = []
    for r in rows:
        s = r.snapshot
        try:
            scores.append(truth.probabilities[(s.lead_id, s.quarter, s.week)])
        except KeyError:
            raise WinpropError(
                f"snapshot ({s.lead_id}, {s.quarter}, week {s.week}) is not in the ground truth"
            ) from None
    return scored_rows(rows, scores, segment)


def write_simulation(sim: Simulation, directory):
    """Snapshot/outcome CSVs per quarter plus ``ground_truth.json``."""
    directory = Path(directory)
    files = []
    for q in sorted(sim.snapshots):
        write_quarter(directory, q, sim.snapshots[q], sim.outcomes[q])
        files += [f"snapshots_{q}.csv", f"outcomes_{q}.csv"]
    with open(directory / "ground_truth.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sim.truth.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    files.append("ground_truth.json")
    return files


def read_ground_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != TRUTH_FORMAT_VERSION:
        raise WinpropError(f"unsupported ground truth format_version {doc.get('format_version')!r}")
    coef = CoefficientSpec.from_dict(doc["coefficients"])
    vocab = truth_vocabulary(coef)
    probs = {(lid, Quarter.parse(q), int(wk)): float(p) for lid, q, wk, p in doc["probabilities"]}
    return GroundTruth(coef, probs, vocab, _weights(coef, vocab))
