import filecmp
import math

import numpy as np
import pytest

from winprop.assembly import CompositionPolicy, compose_training_set, label_snapshots
from winprop.datastore import Quarter
from winprop.errors import ConfigurationError
from winprop.features import build_design_matrix, encode, fit_vocabulary
from winprop.metrics import roc_auc, scored_rows, seller_baseline
from winprop.model import TrainConfig, predict_batch, predict_propensity, train
from winprop.simgen import (
    CoefficientSpec,
    GeneratorConfig,
    bayes_optimal_scores,
    category_names,
    draw_coefficients,
    generate,
    hazards,
    read_ground_truth,
    truth_model,
    win_week_probabilities,
    write_simulation,
)

Q1 = Quarter(2013, 1)
SMALL = dict(cardinalities={"geography": 3, "stage": 3, "owner": 2})


def every_row(sim):
    return [s for q in sorted(sim.snapshots) for s in sim.snapshots[q]]


class TestHazards:
    def test_micro_instance(self):
        probs = [0.5, 0.4, 0.2]
        # hand-derived: (0.5-0.4)/0.6, (0.4-0.2)/0.8, then 0.2 at quarter end
        assert hazards(probs) == pytest.approx([1 / 6, 0.25, 0.2])
        # win at step k: survive the earlier hazards, then win
        assert win_week_probabilities(probs) == pytest.approx([1 / 6, 5 / 6 * 0.25, 5 / 6 * 0.75 * 0.2])

    def test_eventual_win_equals_first_probability(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            probs = sorted(rng.random(rng.integers(1, 14)), reverse=True)
            total = sum(win_week_probabilities(probs))
            assert total == pytest.approx(probs[0], abs=1e-12)
            # same identity from every later starting week
            for j in range(len(probs)):
                assert sum(win_week_probabilities(probs[j:])) == pytest.approx(probs[j], abs=1e-12)


class TestGenerate:
    def test_byte_identical_runs(self, tmp_path):
        cfg = GeneratorConfig(seed=42, leads_per_quarter=100)
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        files = write_simulation(generate(cfg), a)
        assert write_simulation(generate(cfg), b) == files
        match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
        assert mismatch == [] and errors == []

    def test_ground_truth_file_round_trip(self, tmp_path):
        sim = generate(GeneratorConfig(leads_per_quarter=30, **SMALL))
        write_simulation(sim, tmp_path)
        back = read_ground_truth(tmp_path / "ground_truth.json")
        assert back.probabilities == sim.truth.probabilities
        assert np.array_equal(back.weights, sim.truth.weights)

    def test_realized_rate(self):
        sim = generate(GeneratorConfig(seed=42, leads_per_quarter=10_000, positive_rate=0.25))
        outcomes = sim.outcomes[Q1]
        rate = sum(o.status == "won" for o in outcomes) / len(outcomes)
        assert 0.20 <= rate <= 0.30

    def test_invariants(self):
        sim = generate(GeneratorConfig(leads_per_quarter=200, **SMALL))
        by_lead = {}
        for s in every_row(sim):
            by_lead.setdefault(s.lead_id, []).append(s)
            assert 0.0 <= s.continuous["seller_rating"] <= 1.0
        outcomes = {o.lead_id: o for o in sim.outcomes[Q1]}
        assert set(outcomes) == set(by_lead)
        for lead_id, snaps in by_lead.items():
            weeks = [s.week for s in snaps]
            assert weeks == list(range(weeks[0], weeks[-1] + 1))
            ages = [s.continuous["lead_age"] for s in snaps]
            assert all(b - a == 7 for a, b in zip(ages, ages[1:]))
            o = outcomes[lead_id]
            if o.status != "won" or o.week is None:
                assert weeks[-1] == 13
            else:
                assert weeks[-1] == o.week - 1
            probs = [sim.truth.probabilities[(lead_id, Q1, w)] for w in weeks]
            assert all(b <= a + 1e-15 for a, b in zip(probs, probs[1:]))

    def test_truth_model_consistent(self):
        sim = generate(GeneratorConfig(leads_per_quarter=100, **SMALL))
        model = truth_model(sim.truth)
        worst = 0.0
        for s in every_row(sim):
            p = predict_propensity(model, encode(s, sim.truth.vocab))
            worst = max(worst, abs(p - sim.truth.probabilities[(s.lead_id, s.quarter, s.week)]))
        assert worst <= 1e-12

    def test_adding_leads_keeps_earlier_draws(self):
        base = GeneratorConfig(seed=7, leads_per_quarter=40, **SMALL)
        coef = draw_coefficients(base)
        fixed = CoefficientSpec(coef.unary, coef.continuous, coef.interaction, coef.continuous_interaction, -0.5)
        small = generate(GeneratorConfig(seed=7, leads_per_quarter=40, coefficients=fixed, **SMALL))
        large = generate(GeneratorConfig(seed=7, leads_per_quarter=90, coefficients=fixed, **SMALL))
        n = len(small.snapshots[Q1])
        assert large.snapshots[Q1][:n] == small.snapshots[Q1]
        assert large.outcomes[Q1][:40] == small.outcomes[Q1]

    def test_rising_probability_rejected(self):
        coef = CoefficientSpec(unary={"stage": {"S1": 0.0, "S2": 0.0, "S3": 0.0}}, interaction={"stage": {"S1": 0.5, "S2": 0.0, "S3": 0.0}})
        with pytest.raises(ConfigurationError, match="rise with week"):
            generate(GeneratorConfig(leads_per_quarter=50, coefficients=coef, **SMALL))

    def test_unreachable_rate_reports_achieved(self):
        coef = CoefficientSpec(unary={"geography": {n: (100.0 if i == 0 else -100.0) for i, n in enumerate(category_names("geography", 3))}})
        with pytest.raises(ConfigurationError, match="achieved"):
            generate(GeneratorConfig(leads_per_quarter=300, coefficients=coef, positive_rate=0.05, **SMALL))


def _geo_coef(scale):
    # intercept pinned at 0: calibrating it would pull one group off its extreme
    return CoefficientSpec(unary={"geography": dict(zip(category_names("geography", 2), (scale, -scale)))}, intercept=0.0)


class TestBayes:
    def test_near_separable(self):
        cfg = GeneratorConfig(leads_per_quarter=2000, coefficients=_geo_coef(20.0), positive_rate=0.5,
                              cardinalities={"geography": 2, "stage": 3})
        sim = generate(cfg)
        auc = roc_auc(bayes_optimal_scores(sim.truth, sim.snapshots[Q1], sim.outcomes[Q1]))
        assert auc >= 0.99

    def test_uninformative_truth(self):
        cfg = GeneratorConfig(leads_per_quarter=10_000, coefficients=CoefficientSpec(), **SMALL)
        sim = generate(cfg)
        auc = roc_auc(bayes_optimal_scores(sim.truth, sim.snapshots[Q1], sim.outcomes[Q1]))
        assert 0.48 <= auc <= 0.52

    def test_noise_free_seller_is_bayes(self):
        cfg = GeneratorConfig(leads_per_quarter=1500, seller_rating_noise=0.0,
                              quarters=(Quarter(2013, 1), Quarter(2013, 4), Quarter(2014, 1)))
        sim = generate(cfg)
        target = Quarter(2014, 1)
        ts = compose_training_set(target, CompositionPolicy(), sim.snapshots, sim.outcomes)
        vocab = fit_vocabulary(ts)
        enc, y = build_design_matrix(ts.rows, vocab)
        model, _ = train(enc, y, TrainConfig(), vocab=vocab)
        rows = label_snapshots(sim.snapshots[target], sim.outcomes[target])
        held, _ = build_design_matrix(rows, vocab)
        model_auc = roc_auc(scored_rows(rows, predict_batch(model, held)))
        seller_auc = roc_auc(seller_baseline(sim.snapshots[target], sim.outcomes[target]))
        bayes_auc = roc_auc(bayes_optimal_scores(sim.truth, sim.snapshots[target], sim.outcomes[target]))
        assert seller_auc == pytest.approx(bayes_auc, abs=1e-12)
        assert seller_auc >= model_auc
        assert bayes_auc >= model_auc - 0.005

    def test_unknown_snapshot(self):
        sim = generate(GeneratorConfig(leads_per_quarter=20, **SMALL))
        other = generate(GeneratorConfig(seed=1, leads_per_quarter=30, quarters=(Quarter(2013, 2),), **SMALL))
        with pytest.raises(Exception, match="not in the ground truth"):
            bayes_optimal_scores(sim.truth, other.snapshots[Quarter(2013, 2)], other.outcomes[Quarter(2013, 2)])


@pytest.mark.parametrize("kw", [dict(leads_per_quarter=0), dict(positive_rate=1.0), dict(seller_rating_noise=-1), dict(creation_weeks=14)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GeneratorConfig(**kw)


def test_category_names():
    assert category_names("geography", 3) == ["GCG", "Japan", "AP"]
    assert category_names("owner", 10)[0] == "O01"
    assert category_names("stage", 2) == ["S1", "S2"]
    assert math.isclose(len(category_names("product", 5)), 5)
