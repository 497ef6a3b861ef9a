"""Checks of the identification assumptions against crossover data.

Crossover trials observe both potential adherences, so the assumptions the
principal-score estimators rest on become testable: monotonicity shows up
as an (almost) empty stratum cell, within-arm and cross-world ignorability
as adherence coefficients in outcome regressions, and cross-world
independence as agreement between observed stratum proportions and their
independence-based reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import (
    JOINT_LABELS,
    StratumLabel,
    StratumTable,
    SubjectRecord,
    classify_strata,
)
from .errors import (
    DegenerateResponseError,
    DiagnosticError,
    InsufficientDataError,
    MissingDataError,
    SingularDesignError,
)
from .estimators import ProbMethod, _covariate_matrix, _prob_vector
from .glm import DesignMatrix, fit_logistic, fit_ols, t_two_sided_p
from .resampling import exceedance_p, resample_indices


class MonotonicityDirection(Enum):
    """Which stratum cells monotone adherence forbids."""

    INCREASING = "increasing"  # A(1) >= A(0): forbids S10
    DECREASING = "decreasing"  # A(1) <= A(0): forbids S01
    EQUAL = "equal"  # A(1) == A(0): forbids both off-diagonal cells

    @property
    def forbidden(self) -> tuple[StratumLabel, ...]:
        if self is MonotonicityDirection.INCREASING:
            return (StratumLabel(1, 0),)
        if self is MonotonicityDirection.DECREASING:
            return (StratumLabel(0, 1),)
        return (StratumLabel(0, 1), StratumLabel(1, 0))


@dataclass(frozen=True)
class MonotonicityReport:
    direction: MonotonicityDirection
    table: StratumTable
    violating_proportion: float
    note: str

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.value,
            "n": self.table.n_total,
            "counts": {str(lab): self.table.counts[lab] for lab in JOINT_LABELS},
            "proportions": {str(lab): self.table.proportions[lab] for lab in JOINT_LABELS},
            "violating_proportion": self.violating_proportion,
            "note": self.note,
        }


def monotonicity_report(
    records: Sequence[SubjectRecord],
    direction: MonotonicityDirection = MonotonicityDirection.INCREASING,
) -> MonotonicityReport:
    """Tabulate strata and the share of subjects in cells monotonicity forbids.

    Records need adherence in both periods (stratum-variable completers).
    """
    table = classify_strata(records)
    forbidden = direction.forbidden
    violating = sum(table.counts[lab] for lab in forbidden)
    prop = violating / table.n_total
    cells = ", ".join(str(lab) for lab in forbidden)
    note = (
        f"monotonicity ({direction.value}) requires empty {cells}; observed "
        f"{violating} of {table.n_total} subjects ({prop:.1%}) there"
    )
    return MonotonicityReport(
        direction=direction, table=table, violating_proportion=prop, note=note
    )


@dataclass(frozen=True)
class RegressionRow:
    """One outcome-on-adherence regression (covariate- and period-adjusted)."""

    outcome_arm: int
    adherence_arm: int
    coefficient: float
    standard_error: float
    p_value: float
    adjusted_mean_a0: float
    adjusted_mean_a1: float

    @property
    def is_own_arm(self) -> bool:
        return self.outcome_arm == self.adherence_arm

    def to_dict(self) -> dict:
        return {
            "outcome_arm": self.outcome_arm,
            "adherence_arm": self.adherence_arm,
            "coefficient": self.coefficient,
            "standard_error": self.standard_error,
            "p_value": self.p_value,
            "adjusted_mean_a0": self.adjusted_mean_a0,
            "adjusted_mean_a1": self.adjusted_mean_a1,
        }


@dataclass(frozen=True)
class IgnorabilityReport:
    """Own-arm rows gauge within-treatment ignorability, cross-arm rows the
    cross-world version; a significant cross-arm coefficient is the red flag
    for weighting-based estimation."""

    rows: tuple[RegressionRow, ...]
    n_subjects: int

    def row(self, outcome_arm: int, adherence_arm: int) -> RegressionRow:
        for r in self.rows:
            if (r.outcome_arm, r.adherence_arm) == (outcome_arm, adherence_arm):
                return r
        raise KeyError((outcome_arm, adherence_arm))

    def to_dict(self) -> dict:
        return {"n": self.n_subjects, "regressions": [r.to_dict() for r in self.rows]}


def ignorability_regressions(
    records: Sequence[SubjectRecord], covariates: Sequence[str] | None = None
) -> IgnorabilityReport:
    """Regress each arm's outcome on each arm's adherence, X, and period.

    Needs completers for adherence and outcome in both periods. Four rows
    come back in (outcome, adherence) order (0,0), (1,1), (0,1), (1,0).
    """
    records = list(records)
    if not records:
        raise InsufficientDataError("no records")
    for rec in records:
        if None in (rec.a_p1, rec.a_p2, rec.y_p1, rec.y_p2):
            raise MissingDataError(
                f"subject {rec.subject_id!r} is not a completer; apply "
                "completer_filter(records, CompleterRule.BOTH) first"
            )
    names = tuple(covariates) if covariates is not None else records[0].covariate_names
    x = _covariate_matrix(records, names) if names else np.empty((len(records), 0))
    y = {t: np.asarray([rec.y_for_arm(t) for rec in records], dtype=float) for t in (0, 1)}
    a = {t: np.asarray([rec.a_for_arm(t) for rec in records], dtype=float) for t in (0, 1)}
    period2 = {
        t: np.asarray([rec.period_of_arm(t) == 2 for rec in records], dtype=float)
        for t in (0, 1)
    }

    rows = []
    for outcome_arm, adherence_arm in ((0, 0), (1, 1), (0, 1), (1, 0)):
        cols = [a[adherence_arm]] + [x[:, j] for j in range(x.shape[1])] + [period2[outcome_arm]]
        design = DesignMatrix.with_intercept(("adherence", *names, "period2"), cols)
        fit = fit_ols(design, y[outcome_arm])
        coef_a = fit.coef("adherence")
        idx_a = fit.names.index("adherence")
        base = float(fit.coefficients[0])
        base += float(np.sum(fit.coefficients[2:-1] * x.mean(axis=0))) if names else 0.0
        base += float(fit.coefficients[-1]) * float(period2[outcome_arm].mean())
        rows.append(
            RegressionRow(
                outcome_arm=outcome_arm,
                adherence_arm=adherence_arm,
                coefficient=coef_a,
                standard_error=float(fit.standard_errors[idx_a]),
                p_value=float(fit.p_values[idx_a]),
                adjusted_mean_a0=base,
                adjusted_mean_a1=base + coef_a,
            )
        )
    return IgnorabilityReport(rows=tuple(rows), n_subjects=len(records))


@dataclass(frozen=True)
class IndependenceReport:
    method: ProbMethod
    observed: dict[StratumLabel, float]
    estimated: dict[StratumLabel, float]
    discrepancy: float  # max absolute cell gap
    p_value: float
    secondary_discrepancy: float  # sum of squared cell gaps
    secondary_p_value: float
    n_subjects: int
    n_bootstrap: int
    n_rejected: int

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "n": self.n_subjects,
            "observed": {str(lab): self.observed[lab] for lab in JOINT_LABELS},
            "estimated": {str(lab): self.estimated[lab] for lab in JOINT_LABELS},
            "discrepancy": self.discrepancy,
            "p_value": self.p_value,
            "secondary_discrepancy": self.secondary_discrepancy,
            "secondary_p_value": self.secondary_p_value,
            "n_bootstrap": self.n_bootstrap,
            "n_rejected": self.n_rejected,
        }


def _cell_products(g0: np.ndarray, g1: np.ndarray) -> np.ndarray:
    """Mean of g0^k (1-g0)^(1-k) * g1^l (1-g1)^(1-l) per joint cell."""
    return np.asarray(
        [
            float(np.mean((g0 if lab.a0 == 1 else 1.0 - g0) * (g1 if lab.a1 == 1 else 1.0 - g1)))
            for lab in JOINT_LABELS
        ]
    )


def independence_test(
    records: Sequence[SubjectRecord],
    method: ProbMethod = ProbMethod.COND_INDEP,
    covariates: Sequence[str] | None = None,
    n_bootstrap: int = 500,
    seed: int = 0,
) -> IndependenceReport:
    """Bootstrap test of observed stratum proportions against an
    independence-based reconstruction.

    The statistic is the largest absolute cell gap. The null distribution
    comes from subject-level resampling with every model refit, with each
    replicate's gap centered at the full-sample gap, so the p-value measures
    whether the observed gap exceeds pure sampling noise. Replicates where a
    model cannot be refit are rejected and redrawn; more than 10% rejections
    aborts the test. Records need adherence in both periods.
    """
    records = list(records)
    if method is ProbMethod.OBSERVED:
        raise ValueError("compare against a model-based method, not the observed table")
    if n_bootstrap < 1:
        raise ValueError("n_bootstrap must be at least 1")
    n = len(records)
    if n < 4:
        raise InsufficientDataError("too few records for the independence test")
    for rec in records:
        if rec.a_p1 is None or rec.a_p2 is None:
            raise MissingDataError(
                f"subject {rec.subject_id!r} has missing adherence; apply "
                "completer_filter(records, CompleterRule.STRATUM_VAR) first"
            )

    names = tuple(covariates) if covariates is not None else records[0].covariate_names
    obs_vec = _prob_vector(records, ProbMethod.OBSERVED, None)
    est_vec = _prob_vector(records, method, names)
    gap0 = obs_vec - est_vec
    d_obs = float(np.max(np.abs(gap0)))
    ssq_obs = float(np.sum(gap0**2))

    a0 = np.asarray([rec.a_for_arm(0) for rec in records], dtype=np.int64)
    a1 = np.asarray([rec.a_for_arm(1) for rec in records], dtype=np.int64)
    x = _covariate_matrix(records, names) if names else np.empty((n, 0))
    design_full = np.column_stack([np.ones(n), x])
    col_names = ("intercept", *names)

    warm: dict[int, np.ndarray] = {}
    if method is ProbMethod.COND_INDEP:
        for arm, a_vec in ((0, a0), (1, a1)):
            fit = fit_logistic(DesignMatrix(col_names, design_full), a_vec.astype(float))
            if not fit.converged:
                raise DiagnosticError(
                    f"arm-{arm} principal-score model did not converge on the full data"
                )
            warm[arm] = fit.coefficients

    d_null = np.empty(n_bootstrap)
    ssq_null = np.empty(n_bootstrap)
    n_rejected = 0
    reject_cap = 0.1 * n_bootstrap
    collected = 0
    attempt = 0
    while collected < n_bootstrap:
        idx = resample_indices(seed, attempt, n)
        attempt += 1
        b0, b1 = a0[idx], a1[idx]
        obs_b = np.bincount(2 * b0 + b1, minlength=4).astype(float) / n
        try:
            if method is ProbMethod.INDEP:
                p0, p1 = float(np.mean(b0)), float(np.mean(b1))
                est_b = np.asarray(
                    [
                        (p0 if lab.a0 == 1 else 1 - p0) * (p1 if lab.a1 == 1 else 1 - p1)
                        for lab in JOINT_LABELS
                    ]
                )
            else:
                xb = design_full[idx]
                design_b = DesignMatrix(col_names, xb)
                fits = []
                for arm, ab in ((0, b0), (1, b1)):
                    fit = fit_logistic(design_b, ab.astype(float), start=warm[arm])
                    if not fit.converged:
                        raise DegenerateResponseError("resample fit did not converge")
                    fits.append(fit)
                g0 = expit(xb @ fits[0].coefficients)
                g1 = expit(xb @ fits[1].coefficients)
                est_b = _cell_products(g0, g1)
        except (DegenerateResponseError, SingularDesignError, InsufficientDataError):
            n_rejected += 1
            if n_rejected > reject_cap:
                raise DiagnosticError(
                    f"model refit failed on {n_rejected} resamples (>10% of "
                    f"{n_bootstrap}); the data are too sparse for this test"
                )
            continue
        centered = (obs_b - est_b) - gap0
        d_null[collected] = np.max(np.abs(centered))
        ssq_null[collected] = np.sum(centered**2)
        collected += 1

    observed = {lab: float(obs_vec[i]) for i, lab in enumerate(JOINT_LABELS)}
    estimated = {lab: float(est_vec[i]) for i, lab in enumerate(JOINT_LABELS)}
    return IndependenceReport(
        method=method,
        observed=observed,
        estimated=estimated,
        discrepancy=d_obs,
        p_value=exceedance_p(d_null, d_obs),
        secondary_discrepancy=ssq_obs,
        secondary_p_value=exceedance_p(ssq_null, ssq_obs),
        n_subjects=n,
        n_bootstrap=n_bootstrap,
        n_rejected=n_rejected,
    )


@dataclass(frozen=True)
class CrossoverEffectsReport:
    """Two-stage crossover analysis on period differences and sums."""

    treatment_effect: float
    treatment_t: float
    treatment_p: float
    period_effect: float
    period_t: float
    period_p: float
    sequence_t: float
    sequence_p: float
    n_cf: int
    n_ef: int

    def to_dict(self) -> dict:
        return {
            "n_cf": self.n_cf,
            "n_ef": self.n_ef,
            "treatment_effect": self.treatment_effect,
            "treatment_t": self.treatment_t,
            "treatment_p": self.treatment_p,
            "period_effect": self.period_effect,
            "period_t": self.period_t,
            "period_p": self.period_p,
            "sequence_t": self.sequence_t,
            "sequence_p": self.sequence_p,
        }


def _pooled_t(v1: np.ndarray, v2: np.ndarray) -> tuple[float, float]:
    n1, n2 = v1.size, v2.size
    dof = n1 + n2 - 2
    sp2 = ((n1 - 1) * np.var(v1, ddof=1) + (n2 - 1) * np.var(v2, ddof=1)) / dof
    diff = float(np.mean(v1) - np.mean(v2))
    se = float(np.sqrt(sp2 * (1.0 / n1 + 1.0 / n2)))
    if se == 0.0:
        t = 0.0 if diff == 0.0 else float(np.sign(diff) * np.inf)
    else:
        t = diff / se
    return t, float(t_two_sided_p(t, dof))


def crossover_effects_test(records: Sequence[SubjectRecord]) -> CrossoverEffectsReport:
    """Treatment, period, and sequence (carry-over) tests from period
    differences and sums, compared between sequence groups.

    Needs outcome completers (y in both periods) and at least two subjects
    per sequence. The sequence test doubles as the carry-over check: with no
    carry-over, period sums have equal means in both sequence groups.
    """
    records = list(records)
    for rec in records:
        if rec.y_p1 is None or rec.y_p2 is None:
            raise MissingDataError(
                f"subject {rec.subject_id!r} is missing an outcome; apply "
                "completer_filter(records, CompleterRule.OUTCOME) first"
            )
    d_cf = np.asarray(
        [r.y_p1 - r.y_p2 for r in records if r.t_p1 == 0], dtype=float
    )
    d_ef = np.asarray(
        [r.y_p1 - r.y_p2 for r in records if r.t_p1 == 1], dtype=float
    )
    s_cf = np.asarray([r.y_p1 + r.y_p2 for r in records if r.t_p1 == 0], dtype=float)
    s_ef = np.asarray([r.y_p1 + r.y_p2 for r in records if r.t_p1 == 1], dtype=float)
    if d_cf.size < 2 or d_ef.size < 2:
        raise InsufficientDataError(
            f"need at least two outcome completers per sequence, have "
            f"CF={d_cf.size}, EF={d_ef.size}"
        )

    # with y_p1 - y_p2: E[d_CF] = -tau - pi and E[d_EF] = tau - pi, so the
    # group contrast isolates the treatment effect and the sum isolates the
    # period effect
    treatment_t, treatment_p = _pooled_t(d_ef, d_cf)
    period_t, period_p = _pooled_t(d_cf, -d_ef)
    sequence_t, sequence_p = _pooled_t(s_cf, s_ef)
    return CrossoverEffectsReport(
        treatment_effect=float((np.mean(d_ef) - np.mean(d_cf)) / 2.0),
        treatment_t=treatment_t,
        treatment_p=treatment_p,
        period_effect=float(-(np.mean(d_cf) + np.mean(d_ef)) / 2.0),
        period_t=period_t,
        period_p=period_p,
        sequence_t=sequence_t,
        sequence_p=sequence_p,
        n_cf=int(d_cf.size),
        n_ef=int(d_ef.size),
    )
