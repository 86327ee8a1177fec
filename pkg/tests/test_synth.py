import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import logit

from riskfair.cohort import Cohort, OutcomeTask
from riskfair.fairness import ScoredGroup, auc
from riskfair.synth import (DEFAULT_COEFFICIENTS, GRADE_DRIVEN_COEFFICIENTS, TABLE1_TARGETS, FitError,
                            GeneratorConfig, GradeDistribution, OutcomeCoefficients, RiskTarget, bayes_auc,
                            bayes_scores, expected_marginals, fit_outcome_coefficients, generate,
                            validate_marginals)
from tests.conftest import record


def test_empty():
    assert len(generate(GeneratorConfig(n=0))) == 0


def test_deterministic():
    cfg = GeneratorConfig(n=500, seed=11)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg) != generate(replace(cfg, seed=12))


def test_label_consistency(cohort10k):
    assert not any(r.dropout and r.underperform for r in cohort10k.records)


def test_grades_in_scale(cohort10k):
    g = cohort10k.column("admission_grade")
    assert g.min() >= 5 and g.max() <= 14


def test_female_prevalence_100k():
    c = generate(GeneratorConfig(n=100_000, seed=3))
    frac = np.mean(c.column("gender") == "female")
    assert abs(frac - 0.09) <= 0.005


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(marginals={"female": 1.5, "foreign": .1, "age_over_19": .4, "in_state": .7,
                                   "public_hs": .4})
    with pytest.raises(ValueError):
        GeneratorConfig(year_weights={2010: 0.5})
    with pytest.raises(ValueError):
        GradeDistribution(lo=10, hi=5)


def test_config_round_trip(tmp_path):
    cfg = GeneratorConfig(n=123, seed=4)
    p = tmp_path / "g.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert GeneratorConfig.from_json(p) == cfg
    assert GeneratorConfig.from_dict({"coefficients": "grade_driven"}).coefficients == GRADE_DRIVEN_COEFFICIENTS
    with pytest.raises(ValueError):
        GeneratorConfig.from_dict({"colour": 1})


def test_equal_targets_give_flat_weights():
    flat = [RiskTarget(t.group, t.prevalence, 0.43, 0.52) for t in TABLE1_TARGETS]
    coef = fit_outcome_coefficients(flat)
    np.testing.assert_allclose(coef.dropout[1:], 0.0, atol=1e-4)
    assert coef.dropout[0] == pytest.approx(logit(0.43), abs=1e-4)


def test_table1_fit_signs_and_rates():
    coef = fit_outcome_coefficients(TABLE1_TARGETS)
    assert coef.dropout[2] > 0  # foreign raises risk
    rep = expected_marginals(replace(GeneratorConfig(), coefficients=coef), TABLE1_TARGETS)
    got = {(e.group, e.quantity): e.achieved for e in rep.entries}
    assert got[("national", "dropout")] == pytest.approx(0.41, abs=0.01)
    assert got[("foreign", "dropout")] == pytest.approx(0.58, abs=0.01)


def test_inconsistent_targets():
    bad = [RiskTarget("foreign", 0.12, 0.9, 0.9), RiskTarget("national", 0.88, 0.9, 0.9),
           RiskTarget("overall", 1.0, 0.43, 0.52)]
    with pytest.raises(FitError, match="inconsistent"):
        fit_outcome_coefficients(bad)


def test_validate_marginals_arithmetic():
    recs = [record(i, gender="female" if i < 3 else "male") for i in range(10)]
    rep = validate_marginals(Cohort(tuple(recs)), [RiskTarget("female", prevalence=0.5)])
    (e,) = rep.entries
    assert e.achieved == pytest.approx(0.3)
    assert e.deviation == pytest.approx(0.2)
    assert validate_marginals(Cohort(tuple(recs)), []).entries == ()


def test_report_formats(cohort10k):
    rep = validate_marginals(cohort10k, TABLE1_TARGETS)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "group,quantity,target,achieved,deviation"
    assert len(lines) == 1 + len(rep.entries)
    assert rep.to_text().splitlines()[-1].startswith("max deviation")


def test_default_bayes_auc():
    for task in OutcomeTask:
        assert bayes_auc(GeneratorConfig(), task) == pytest.approx(0.80, abs=0.002)


def test_bayes_auc_matches_sample(cohort10k):
    cfg = GeneratorConfig(n=10_000, seed=7)
    s = bayes_scores(cohort10k, cfg, OutcomeTask.DROPOUT)
    y = OutcomeTask.DROPOUT.labels(cohort10k)
    assert auc(ScoredGroup("all", s, y)) == pytest.approx(bayes_auc(cfg, OutcomeTask.DROPOUT), abs=0.02)


def test_coefficient_shape():
    with pytest.raises(ValueError):
        OutcomeCoefficients((0.0,) * 3, DEFAULT_COEFFICIENTS.underperform)
