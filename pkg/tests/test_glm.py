"""OLS and logistic fits against independently computed references.

OLS references were solved exactly (rational arithmetic on the normal
equations); logistic references come from a coarse-to-fine grid search over
the Bernoulli log-likelihood. Values are frozen here, not recomputed.
"""

import math

import numpy as np
import pytest

from pcekit.errors import DegenerateResponseError, InsufficientDataError, SingularDesignError
from pcekit.glm import (
    DesignMatrix,
    fit_logistic,
    fit_ols,
    predict_prob,
    predict_probs,
    t_two_sided_p,
)

OLS_ORACLE = {
    "slope5": dict(
        design=[[1, x] for x in (0, 1, 2, 3, 4)],
        y=[1, 2, 2, 4, 5],
        coefficients=[0.8, 1.0],
        standard_errors=[0.4, 0.16329931618554522],
        t_stats=[2.0, 6.123724356957945],
        p_values=[0.1393259685588432, 0.00875441235902439],
        sigma2=0.26666666666666666,
        dof=3,
    ),
    "two_covariates": dict(
        design=[[1, x1, x2] for x1, x2 in zip((1, 2, 3, 4, 5, 6), (1, 4, 2, 8, 5, 7))],
        y=[3, 6, 7, 12, 11, 14],
        coefficients=[0.9637681159420289, 1.4565217391304348, 0.6159420289855072],
        standard_errors=[0.3822306359375441, 0.14938788498614713, 0.10205135349892565],
        t_stats=[2.5214308465308557, 9.749932126460585, 6.035608621222174],
        p_values=[0.08606858010123464, 0.002292233666083877, 0.009119508745297416],
        sigma2=0.1642512077294686,
        dof=3,
    ),
    "intercept_only": dict(
        design=[[1]] * 4,
        y=[1, 2, 4, 9],
        coefficients=[4.0],
        standard_errors=[1.7795130420052185],
        t_stats=[2.2478059477960657],
        p_values=[0.11016167564218522],
        sigma2=12.666666666666666,
        dof=3,
    ),
    "perfect_fit": dict(
        design=[[1, x] for x in (1, 2, 3, 4, 5)],
        y=[3, 5, 7, 9, 11],
        coefficients=[1.0, 2.0],
        standard_errors=[0.0, 0.0],
        t_stats=[math.inf, math.inf],
        p_values=[0.0, 0.0],
        sigma2=0.0,
        dof=3,
    ),
    "half_steps": dict(
        design=[[1, x] for x in (-3, -2, -1, 0, 1, 2, 3)],
        y=[0.5, 1, 2.5, 2, 3.5, 3, 4.5],
        coefficients=[2.4285714285714284, 0.6071428571428571],
        standard_errors=[0.19948914348241345, 0.09974457174120673],
        t_stats=[12.17395285867036, 6.08697642933518],
        p_values=[6.610750422970952e-05, 0.0017308181524720084],
        sigma2=0.2785714285714286,
        dof=5,
    ),
}

LOGISTIC_ORACLE = {
    "six_point": dict(
        x=(0, 0, 0, 1, 1, 1),
        a=(0, 0, 1, 1, 1, 0),
        coefficients=[-0.6931471805599453, 1.3862943611198906],  # (-ln 2, 2 ln 2)
    ),
    "eight_point": dict(
        x=(-1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2),
        a=(0, 0, 1, 0, 1, 0, 1, 1),
        coefficients=[-0.29704218623999995, 1.18816872448],
    ),
}

T_P_ORACLE = {
    (1.5, 3): 0.23058386524482305,
    (2.5, 10): 0.031446844236608804,
    (0.0, 5): 1.0,
    (6.0, 1): 0.10513691342250686,
    (0.75, 28): 0.45951073174139795,
}


def _design(rows):
    values = np.asarray(rows, dtype=float)
    names = tuple(["intercept"] + [f"x{j}" for j in range(1, values.shape[1])])
    return DesignMatrix(names, values)


@pytest.mark.parametrize("name", sorted(OLS_ORACLE))
def test_ols_matches_exact_normal_equations(name):
    case = OLS_ORACLE[name]
    fit = fit_ols(_design(case["design"]), np.asarray(case["y"], dtype=float))
    assert fit.dof == case["dof"]
    assert fit.sigma2 == pytest.approx(case["sigma2"], abs=1e-12)
    for got, want in zip(fit.coefficients, case["coefficients"]):
        assert got == pytest.approx(want, abs=1e-12)
    for got, want in zip(fit.standard_errors, case["standard_errors"]):
        assert got == pytest.approx(want, abs=1e-12)
    for got, want in zip(fit.t_stats, case["t_stats"]):
        if math.isinf(want):
            assert math.isinf(got) and got > 0
        else:
            assert got == pytest.approx(want, abs=1e-10)
    for got, want in zip(fit.p_values, case["p_values"]):
        assert got == pytest.approx(want, abs=1e-12)


def test_ols_coef_lookup_by_name():
    case = OLS_ORACLE["slope5"]
    fit = fit_ols(_design(case["design"]), np.asarray(case["y"], dtype=float))
    assert fit.coef("x1") == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit.coef("x9")


def test_ols_rejects_duplicated_column():
    x = np.arange(5.0)
    design = DesignMatrix.with_intercept(("x1", "x2"), [x, x])
    with pytest.raises(SingularDesignError, match="x2"):
        fit_ols(design, np.arange(5.0))


def test_ols_rejects_column_matching_intercept():
    design = DesignMatrix.with_intercept(("x1",), [np.ones(6)])
    with pytest.raises(SingularDesignError, match="x1"):
        fit_ols(design, np.arange(6.0))


def test_ols_needs_more_rows_than_columns():
    design = DesignMatrix.with_intercept(("x1",), [np.asarray([0.0, 1.0])])
    with pytest.raises(InsufficientDataError):
        fit_ols(design, np.asarray([0.0, 1.0]))


def test_t_two_sided_p_reference_values():
    for (t, dof), want in T_P_ORACLE.items():
        assert t_two_sided_p(t, dof) == pytest.approx(want, abs=1e-12)
        assert t_two_sided_p(-t, dof) == pytest.approx(want, abs=1e-12)
    assert t_two_sided_p(math.inf, 4) == 0.0
    with pytest.raises(ValueError):
        t_two_sided_p(1.0, 0)


def test_t_two_sided_p_vectorized():
    ts = np.asarray([1.5, -1.5, 0.0])
    p = t_two_sided_p(ts, 3)
    assert p.shape == (3,)
    assert p[0] == pytest.approx(p[1], abs=1e-15)
    assert p[2] == 1.0


@pytest.mark.parametrize("name", sorted(LOGISTIC_ORACLE))
def test_logistic_matches_grid_search_oracle(name):
    case = LOGISTIC_ORACLE[name]
    design = DesignMatrix.with_intercept(("x1",), [np.asarray(case["x"], dtype=float)])
    fit = fit_logistic(design, np.asarray(case["a"], dtype=float))
    assert fit.converged
    assert not fit.diverged
    for got, want in zip(fit.coefficients, case["coefficients"]):
        assert got == pytest.approx(want, abs=1e-3)
    # IRLS should land much closer than the acceptance tolerance
    for got, want in zip(fit.coefficients, case["coefficients"]):
        assert got == pytest.approx(want, abs=1e-6)


def test_logistic_intercept_only_hits_logit_of_rate():
    design = DesignMatrix.intercept_only(8)
    fit = fit_logistic(design, np.asarray([1, 1, 1, 0, 0, 0, 0, 0], dtype=float))
    assert fit.converged
    assert fit.coefficients[0] == pytest.approx(math.log(3 / 5), abs=1e-9)


def test_logistic_full_symmetry_stops_at_zero():
    design = DesignMatrix.with_intercept(("x1",), [np.asarray([-1.0, -1.0, 1.0, 1.0])])
    fit = fit_logistic(design, np.asarray([0.0, 1.0, 0.0, 1.0]))
    assert fit.converged
    assert fit.iterations == 0
    assert np.all(fit.coefficients == 0.0)


def test_logistic_separation_flags_divergence():
    design = DesignMatrix.with_intercept(("x1",), [np.asarray([-2.0, -1.0, 1.0, 2.0])])
    fit = fit_logistic(design, np.asarray([0.0, 0.0, 1.0, 1.0]))
    assert not fit.converged
    assert fit.diverged


def test_logistic_degenerate_response():
    design = DesignMatrix.intercept_only(4)
    with pytest.raises(DegenerateResponseError):
        fit_logistic(design, np.ones(4))


def test_logistic_warm_start_converges_fast():
    case = LOGISTIC_ORACLE["six_point"]
    design = DesignMatrix.with_intercept(("x1",), [np.asarray(case["x"], dtype=float)])
    cold = fit_logistic(design, np.asarray(case["a"], dtype=float))
    warm = fit_logistic(
        design, np.asarray(case["a"], dtype=float), start=cold.coefficients
    )
    assert warm.converged
    assert warm.iterations == 0
    assert warm.coefficients == pytest.approx(cold.coefficients)


def test_logistic_deviance_path_is_monotone():
    case = LOGISTIC_ORACLE["eight_point"]
    design = DesignMatrix.with_intercept(("x1",), [np.asarray(case["x"], dtype=float)])
    fit = fit_logistic(design, np.asarray(case["a"], dtype=float))
    path = fit.deviance_path
    assert all(b <= a + 1e-12 for a, b in zip(path, path[1:]))
    assert fit.deviance == path[-1]


def test_predict_prob_matches_matrix_version():
    case = LOGISTIC_ORACLE["six_point"]
    design = DesignMatrix.with_intercept(("x1",), [np.asarray(case["x"], dtype=float)])
    fit = fit_logistic(design, np.asarray(case["a"], dtype=float))
    single = predict_prob(fit, [1.0, 1.0])
    batch = predict_probs(fit, np.asarray([[1.0, 0.0], [1.0, 1.0]]))
    assert single == pytest.approx(batch[1], abs=1e-15)
    # saturated two-level fit reproduces the group rates
    assert batch[0] == pytest.approx(1 / 3, abs=1e-9)
    assert batch[1] == pytest.approx(2 / 3, abs=1e-9)
    with pytest.raises(ValueError):
        predict_prob(fit, [1.0])
    with pytest.raises(ValueError):
        predict_probs(fit, np.ones((2, 3)))


def test_design_matrix_validation():
    with pytest.raises(ValueError, match="unique"):
        DesignMatrix(("a", "a"), np.ones((3, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        DesignMatrix(("a",), np.asarray([[np.nan]]))
    with pytest.raises(ValueError):
        DesignMatrix.with_intercept((), [])
