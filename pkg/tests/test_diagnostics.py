import math

import numpy as np
import pytest

from pcekit.core import CompleterRule, StratumLabel, completer_filter
from pcekit.diagnostics import (
    MonotonicityDirection,
    crossover_effects_test,
    ignorability_regressions,
    independence_test,
    monotonicity_report,
)
from pcekit.errors import (
    DiagnosticError,
    InsufficientDataError,
    MissingDataError,
)
from pcekit.estimators import ProbMethod
from pcekit.glm import DesignMatrix, fit_ols
from pcekit.simulator import generate_trial, scenario

from conftest import make_record


def eight_records():
    # arm-coordinate strata: 2x S00, 1x S01, 1x S10, 4x S11
    return (
        [make_record(f"a{i}", "CF", a=(0, 0), y=(1.0, 2.0)) for i in range(2)]
        + [make_record("b", "CF", a=(0, 1), y=(2.0, 1.0))]
        + [make_record("c", "CF", a=(1, 0), y=(3.0, 5.0))]
        + [make_record(f"d{i}", "EF", a=(1, 1), y=(4.0 + i, 2.0 + i)) for i in range(4)]
    )


def test_monotonicity_directions():
    records = eight_records()
    inc = monotonicity_report(records, MonotonicityDirection.INCREASING)
    assert inc.violating_proportion == 1 / 8
    assert inc.table.counts[StratumLabel(1, 0)] == 1
    assert "S10" in inc.note and "12.5%" in inc.note
    dec = monotonicity_report(records, MonotonicityDirection.DECREASING)
    assert dec.violating_proportion == 1 / 8
    eq = monotonicity_report(records, MonotonicityDirection.EQUAL)
    assert eq.violating_proportion == 2 / 8
    d = inc.to_dict()
    assert d["n"] == 8
    assert d["counts"]["S11"] == 4
    assert d["violating_proportion"] == 1 / 8


def test_monotonicity_needs_classified_records():
    with pytest.raises(MissingDataError):
        monotonicity_report([make_record("a", a=(None, 1))])


def test_ignorability_rows_match_direct_ols():
    rng = np.random.default_rng(4)
    records = []
    for i in range(40):
        seq = "CF" if i % 2 == 0 else "EF"
        a = (int(rng.random() < 0.5), int(rng.random() < 0.6))
        y = (float(rng.standard_normal() + a[0]), float(rng.standard_normal()))
        records.append(make_record(f"s{i}", seq, x=(float(i % 7),), a=a, y=y))
    report = ignorability_regressions(records)
    assert [((r.outcome_arm, r.adherence_arm)) for r in report.rows] == [
        (0, 0),
        (1, 1),
        (0, 1),
        (1, 0),
    ]
    assert report.n_subjects == 40

    # rebuild the (0, 1) row by hand: y(0) on adherence(1), x, period(y(0))
    y0 = np.asarray([r.y_for_arm(0) for r in records])
    a1 = np.asarray([float(r.a_for_arm(1)) for r in records])
    x = np.asarray([r.covariates[0] for r in records])
    p2 = np.asarray([float(r.period_of_arm(0) == 2) for r in records])
    design = DesignMatrix.with_intercept(("adherence", "x_base", "period2"), [a1, x, p2])
    fit = fit_ols(design, y0)
    row = report.row(0, 1)
    assert row.coefficient == pytest.approx(fit.coef("adherence"), abs=1e-12)
    assert row.p_value == pytest.approx(float(fit.p_values[1]), abs=1e-12)
    assert not row.is_own_arm
    # adjusted means differ by exactly the adherence coefficient
    assert row.adjusted_mean_a1 - row.adjusted_mean_a0 == pytest.approx(
        row.coefficient, abs=1e-12
    )
    base = fit.coef("intercept") + fit.coef("x_base") * x.mean() + fit.coef("period2") * p2.mean()
    assert row.adjusted_mean_a0 == pytest.approx(base, abs=1e-12)
    with pytest.raises(KeyError):
        report.row(2, 0)


def test_ignorability_requires_completers():
    with pytest.raises(MissingDataError, match="BOTH"):
        ignorability_regressions([make_record("a", y=(None, 1.0))])
    with pytest.raises(InsufficientDataError):
        ignorability_regressions([])


def test_ignorability_detects_own_arm_dependence():
    # cross-arm rows test a true null, so some seeds dip under 0.05 by chance;
    # seed 2 is a representative clean draw
    cfg = scenario("a3p_violated", n_subjects=300, seed=2)
    records = completer_filter(generate_trial(cfg), CompleterRule.BOTH)
    report = ignorability_regressions(records)
    assert report.row(0, 0).p_value < 0.001
    assert report.row(1, 1).p_value < 0.001
    assert report.row(0, 1).p_value > 0.05
    assert report.row(1, 0).p_value > 0.05


def test_independence_test_validation():
    records = eight_records()
    with pytest.raises(ValueError, match="model-based"):
        independence_test(records, method=ProbMethod.OBSERVED)
    with pytest.raises(InsufficientDataError):
        independence_test(records[:3])
    with pytest.raises(MissingDataError, match="STRATUM_VAR"):
        independence_test(records + [make_record("m", a=(None, 1))])
    with pytest.raises(ValueError):
        independence_test(records, n_bootstrap=0)


def test_independence_test_is_deterministic():
    records = generate_trial(scenario("paper_like", n_subjects=80, seed=6))
    r1 = independence_test(records, n_bootstrap=60, seed=9)
    r2 = independence_test(records, n_bootstrap=60, seed=9)
    assert r1.p_value == r2.p_value
    assert r1.discrepancy == r2.discrepancy
    assert 0.0 < r1.p_value <= 1.0
    assert r1.n_bootstrap == 60
    d = r1.to_dict()
    assert set(d["observed"]) == {"S00", "S01", "S10", "S11"}


def test_independence_test_unconditional_method():
    records = generate_trial(scenario("paper_like", n_subjects=80, seed=6))
    rep = independence_test(records, method=ProbMethod.INDEP, n_bootstrap=60, seed=9)
    assert rep.method is ProbMethod.INDEP
    assert rep.n_rejected == 0
    assert 0.0 < rep.p_value <= 1.0
    # estimated cells factor into marginals exactly
    p1 = rep.estimated[StratumLabel(1, 1)] + rep.estimated[StratumLabel(0, 1)]
    p0 = rep.estimated[StratumLabel(1, 1)] + rep.estimated[StratumLabel(1, 0)]
    assert rep.estimated[StratumLabel(1, 1)] == pytest.approx(p0 * p1, abs=1e-12)


def test_independence_test_aborts_on_sparse_data():
    records = [
        make_record(f"s{i}", "CF", a=(i % 2, int(i == 0)), y=(1.0, 2.0)) for i in range(6)
    ]
    with pytest.raises(DiagnosticError, match="sparse"):
        independence_test(records, covariates=(), n_bootstrap=100, seed=0)


def test_crossover_effects_hand_values():
    records = [
        make_record(f"cf{i}", "CF", y=(float(i), 0.0)) for i in (1, 2, 3)
    ] + [make_record(f"ef{i}", "EF", y=(float(i), 0.0)) for i in (4, 5, 6)]
    rep = crossover_effects_test(records)
    assert rep.n_cf == 3 and rep.n_ef == 3
    assert rep.treatment_effect == pytest.approx(1.5, abs=1e-12)
    assert rep.period_effect == pytest.approx(-3.5, abs=1e-12)
    # pooled two-sample t with means 5 vs 2, sp2 = 1, se = sqrt(2/3)
    assert rep.treatment_t == pytest.approx(3.6742346141747673, abs=1e-12)
    assert rep.treatment_p == pytest.approx(0.021311641128756723, abs=1e-12)
    assert rep.period_t == pytest.approx(8.573214099741123, abs=1e-12)
    assert rep.period_p == pytest.approx(0.0010166626172891212, abs=1e-12)
    assert rep.sequence_t == pytest.approx(-3.6742346141747673, abs=1e-12)
    assert rep.sequence_p == pytest.approx(rep.treatment_p, abs=1e-12)
    d = rep.to_dict()
    assert d["n_cf"] == 3 and d["n_ef"] == 3


def test_crossover_effects_degenerate_spread():
    records = [
        make_record("cf1", "CF", y=(1.0, 0.0)),
        make_record("cf2", "CF", y=(1.0, 0.0)),
        make_record("ef1", "EF", y=(1.0, 0.0)),
        make_record("ef2", "EF", y=(1.0, 0.0)),
    ]
    rep = crossover_effects_test(records)
    assert rep.treatment_t == 0.0 and rep.treatment_p == 1.0
    # zero spread with a nonzero mean gap pins the period t at infinity
    assert math.isinf(rep.period_t)
    assert rep.period_p == 0.0


def test_crossover_effects_validation():
    with pytest.raises(MissingDataError, match="OUTCOME"):
        crossover_effects_test([make_record("a", y=(None, 1.0))])
    few = [
        make_record("cf1", "CF"),
        make_record("cf2", "CF"),
        make_record("ef1", "EF"),
    ]
    with pytest.raises(InsufficientDataError, match="EF=1"):
        crossover_effects_test(few)
