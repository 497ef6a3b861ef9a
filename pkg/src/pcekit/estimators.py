"""Principal-stratum mean and probability estimators.

Two routes to stratum means: principal-score weighting, which reweights
arm-t outcomes by the cross-arm adherence probability g_{1-t}(X) and so
works on parallel-arm data, and direct stratification, which needs the
joint stratum observed and so requires crossover records. Stratum
probabilities likewise come either from observed crossover proportions or
from model-based reconstructions that assume the two potential adherences
are independent (conditionally on X, or unconditionally).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

import numpy as np

from .core import (
    JOINT_LABELS,
    CompleterRule,
    ParallelObservation,
    StratumLabel,
    SubjectRecord,
    as_parallel,
    classify_strata,
    completer_filter,
)
from .errors import (
    ConvergenceError,
    InestimableStratumError,
    InsufficientDataError,
    MissingDataError,
    PcekitError,
)
from .glm import DesignMatrix, LogisticFit, fit_logistic, predict_probs
from .resampling import BootstrapSpec, bootstrap_vector

SCORE_CLIP = 1e-12
EXTREME_SCORE_BAND = (1e-3, 1.0 - 1e-3)

Dataset = Union[Sequence[SubjectRecord], Sequence[ParallelObservation]]


class PceMethod(Enum):
    PS = "ps"
    DIRECT = "direct"


class ProbMethod(Enum):
    OBSERVED = "observed"
    COND_INDEP = "cond-indep"
    INDEP = "indep"


@dataclass(frozen=True)
class PrincipalScoreModel:
    """Logistic model for Pr(A(arm)=1 | X); construction rejects failed fits."""

    arm: int
    fit: LogisticFit
    covariate_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {self.arm!r}")
        if not self.fit.converged:
            detail = "separation detected" if self.fit.diverged else "iteration cap reached"
            raise ConvergenceError(f"principal-score fit for arm {self.arm} did not converge ({detail})")


def _covariate_matrix(
    subjects: Sequence[SubjectRecord] | Sequence[ParallelObservation],
    names: Sequence[str],
) -> np.ndarray:
    """Columns of the named covariates, in the requested order."""
    if not subjects:
        raise InsufficientDataError("no subjects to build covariates from")
    available = subjects[0].covariate_names
    try:
        idx = [available.index(n) for n in names]
    except ValueError as exc:
        raise PcekitError(f"unknown covariate among {tuple(names)!r}; have {available!r}") from exc
    raw = np.asarray([s.covariates for s in subjects], dtype=float)
    return raw[:, idx]


def fit_principal_score(
    obs: Sequence[ParallelObservation], covariates: Sequence[str] | None = None
) -> PrincipalScoreModel:
    """Fit Pr(A(t)=1 | X) on one arm's observations (adherence must be observed)."""
    if not obs:
        raise InsufficientDataError("no observations to fit a principal score on")
    arm = obs[0].t
    for o in obs:
        if o.t != arm:
            raise ValueError("principal-score observations must all come from one arm")
        if o.a is None:
            raise MissingDataError(
                f"subject {o.subject_id!r} has missing adherence; drop a-missing rows first"
            )
    names = tuple(covariates) if covariates is not None else obs[0].covariate_names
    if names:
        design = DesignMatrix.with_intercept(names, _covariate_matrix(obs, names).T)
    else:
        design = DesignMatrix.intercept_only(len(obs))
    fit = fit_logistic(design, np.asarray([o.a for o in obs], dtype=float))
    return PrincipalScoreModel(arm=arm, fit=fit, covariate_names=names)


def principal_scores(
    model: PrincipalScoreModel,
    subjects: Sequence[SubjectRecord] | Sequence[ParallelObservation],
) -> np.ndarray:
    """Predicted adherence probabilities for subjects' covariates, unclipped."""
    n = len(subjects)
    if model.covariate_names:
        x = _covariate_matrix(subjects, model.covariate_names)
        design = np.column_stack([np.ones(n), x])
    else:
        design = np.ones((n, 1))
    return predict_probs(model.fit, design)


def _clip_scores(g: np.ndarray) -> np.ndarray:
    frac_extreme = float(np.mean((g < EXTREME_SCORE_BAND[0]) | (g > EXTREME_SCORE_BAND[1])))
    if frac_extreme > 0.5:
        warnings.warn(
            f"{frac_extreme:.0%} of principal scores are outside [0.001, 0.999]; "
            "weights may be unstable",
            stacklevel=3,
        )
    return np.clip(g, SCORE_CLIP, 1.0 - SCORE_CLIP)


def hayden_weight(g: float, coord: int) -> float:
    """Stratum weight from a cross-arm score: g if coord=1, else 1-g."""
    if not 0.0 < g < 1.0:
        raise ValueError(f"principal score must be strictly inside (0,1), got {g!r}")
    if coord not in (0, 1):
        raise ValueError(f"stratum coordinate must be 0 or 1, got {coord!r}")
    return g if coord == 1 else 1.0 - g


def estimate_mu_hayden(
    obs: Sequence[ParallelObservation],
    cross_model: PrincipalScoreModel,
    stratum: StratumLabel,
) -> float:
    """Principal-score-weighted stratum mean of one arm's outcomes.

    obs must be one arm's observations with a and y observed; cross_model
    must be fit on the opposite arm. For stratum (k, l), subjects with the
    own-arm adherence value are weighted by the cross-arm score raised to
    the stratum's other coordinate: g^c (1-g)^(1-c).
    """
    if not stratum.is_joint:
        raise ValueError("estimate_mu_hayden needs a joint stratum")
    if not obs:
        raise InsufficientDataError("no observations")
    arm = obs[0].t
    for o in obs:
        if o.t != arm:
            raise ValueError("observations must all come from one arm")
        if o.a is None or o.y is None:
            raise MissingDataError(
                f"subject {o.subject_id!r} missing a or y; filter to arm completers first"
            )
    if cross_model.arm != 1 - arm:
        raise ValueError(f"cross_model is for arm {cross_model.arm}; need arm {1 - arm}")
    own_coord = stratum.a0 if arm == 0 else stratum.a1
    cross_coord = stratum.a1 if arm == 0 else stratum.a0
    g = _clip_scores(principal_scores(cross_model, obs))
    a = np.asarray([o.a for o in obs], dtype=float)
    y = np.asarray([o.y for o in obs], dtype=float)
    w = (a == own_coord) * (g if cross_coord == 1 else 1.0 - g)
    total = float(np.sum(w))
    if total <= 0.0:
        raise InestimableStratumError(
            f"no weight in stratum {stratum} for arm {arm}: no subjects with a={own_coord}"
        )
    return float(np.sum(w * y) / total)


def estimate_mu_direct(
    records: Sequence[SubjectRecord], stratum: StratumLabel, t: int
) -> float:
    """Plain mean of arm-t outcomes among subjects observed in the stratum."""
    if not stratum.is_joint:
        raise ValueError("estimate_mu_direct needs a joint stratum")
    if t not in (0, 1):
        raise ValueError(f"treatment arm must be 0 or 1, got {t!r}")
    ys: list[float] = []
    for rec in records:
        a0, a1 = rec.a_for_arm(0), rec.a_for_arm(1)
        if a0 is None or a1 is None:
            raise MissingDataError(
                f"subject {rec.subject_id!r} missing adherence; filter to completers first"
            )
        if (a0, a1) != (stratum.a0, stratum.a1):
            continue
        y = rec.y_for_arm(t)
        if y is None:
            raise MissingDataError(
                f"subject {rec.subject_id!r} missing arm-{t} outcome; filter to completers first"
            )
        ys.append(y)
    if not ys:
        raise InestimableStratumError(f"no subjects observed in stratum {stratum}")
    return float(np.mean(ys))


@dataclass(frozen=True)
class StratumProbEstimate:
    method: ProbMethod
    probs: dict[StratumLabel, float]
    n: int
    se: dict[StratumLabel, float] | None = None

    def __post_init__(self) -> None:
        if set(self.probs) != set(JOINT_LABELS):
            raise ValueError("probs must cover exactly the four joint strata")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"stratum probabilities sum to {total!r}, not 1")

    def prob(self, label: StratumLabel) -> float:
        if label.is_joint:
            return self.probs[label]
        c0, c1 = label.joint_components()
        return self.probs[c0] + self.probs[c1]


def _is_crossover(data: Dataset) -> bool:
    return isinstance(data[0], SubjectRecord)


def _split_parallel(data: Dataset) -> tuple[list[ParallelObservation], list[ParallelObservation]]:
    """Arm-0 and arm-1 observation lists from either data shape."""
    if _is_crossover(data):
        recs = list(data)  # type: ignore[arg-type]
        return as_parallel(recs, 0), as_parallel(recs, 1)
    obs = list(data)  # type: ignore[arg-type]
    return [o for o in obs if o.t == 0], [o for o in obs if o.t == 1]


def _prob_vector(
    data: Dataset, method: ProbMethod, covariates: Sequence[str] | None
) -> np.ndarray:
    """Joint-cell probabilities in JOINT_LABELS order."""
    if method is ProbMethod.OBSERVED:
        if not _is_crossover(data):
            raise PcekitError("observed stratum proportions need crossover records")
        table = classify_strata(list(data))  # type: ignore[arg-type]
        props = table.proportions
        return np.asarray([props[lab] for lab in JOINT_LABELS])

    arm0, arm1 = _split_parallel(data)
    arm0 = [o for o in arm0 if o.a is not None]
    arm1 = [o for o in arm1 if o.a is not None]
    if not arm0 or not arm1:
        raise InsufficientDataError("need adherence observations in both arms")

    if method is ProbMethod.INDEP:
        p0 = float(np.mean([o.a for o in arm0]))
        p1 = float(np.mean([o.a for o in arm1]))
        return np.asarray(
            [
                p0**lab.a0 * (1 - p0) ** (1 - lab.a0) * p1**lab.a1 * (1 - p1) ** (1 - lab.a1)
                for lab in JOINT_LABELS
            ]
        )

    # conditional independence given X: average the product of per-arm scores
    m0 = fit_principal_score(arm0, covariates)
    m1 = fit_principal_score(arm1, covariates)
    if _is_crossover(data):
        subjects: Sequence = list(data)
    else:
        subjects = list(data)
    g0 = principal_scores(m0, subjects)
    g1 = principal_scores(m1, subjects)
    cells = []
    for lab in JOINT_LABELS:
        w0 = g0 if lab.a0 == 1 else 1.0 - g0
        w1 = g1 if lab.a1 == 1 else 1.0 - g1
        cells.append(float(np.mean(w0 * w1)))
    return np.asarray(cells)


def estimate_stratum_probs(
    data: Dataset,
    method: ProbMethod,
    covariates: Sequence[str] | None = None,
    bootstrap_spec: BootstrapSpec | None = None,
) -> StratumProbEstimate:
    """Joint stratum probabilities by the requested method.

    Observed proportions need crossover completers (adherence in both
    periods); the model-based methods work on either data shape. With a
    bootstrap spec, subject-level resampling (refitting any models) supplies
    standard errors.
    """
    data = list(data)
    if not data:
        raise InsufficientDataError("no data")
    vec = _prob_vector(data, method, covariates)
    se: dict[StratumLabel, float] | None = None
    if bootstrap_spec is not None:
        res = bootstrap_vector(
            data, lambda sample: _prob_vector(sample, method, covariates), bootstrap_spec
        )
        se = {lab: float(res.se[i]) for i, lab in enumerate(JOINT_LABELS)}
    probs = {lab: float(vec[i]) for i, lab in enumerate(JOINT_LABELS)}
    return StratumProbEstimate(method=method, probs=probs, n=len(data), se=se)


def combine_marginal(
    mu_joint: Mapping[StratumLabel, float],
    probs: StratumProbEstimate,
    marginal: StratumLabel,
) -> float:
    """Probability-weighted mean over a marginal stratum's two joint cells."""
    if marginal.is_joint:
        raise ValueError("combine_marginal needs a marginal stratum label")
    c0, c1 = marginal.joint_components()
    missing = [str(c) for c in (c0, c1) if c not in mu_joint]
    if missing:
        raise InestimableStratumError(
            f"cannot combine {marginal}: no mean for {', '.join(missing)}"
        )
    p0, p1 = probs.prob(c0), probs.prob(c1)
    total = p0 + p1
    if total <= 0.0:
        raise InestimableStratumError(f"marginal stratum {marginal} has zero probability")
    return (mu_joint[c0] * p0 + mu_joint[c1] * p1) / total


QUANTITIES = ("arm0", "arm1", "diff")


@dataclass(frozen=True)
class EstimateSummary:
    stratum: StratumLabel
    quantity: str  # arm0 | arm1 | diff
    method: PceMethod
    point: float  # NaN when inestimable (see note)
    se: float | None = None
    ci: tuple[float, float] | None = None
    n_effective: int | None = None
    note: str | None = None


def _hayden_cell(
    obs_by_arm: tuple[list[ParallelObservation], list[ParallelObservation]],
    models: tuple[PrincipalScoreModel, PrincipalScoreModel],
    stratum: StratumLabel,
) -> tuple[float, float]:
    mu0 = estimate_mu_hayden(obs_by_arm[0], models[1], stratum)
    mu1 = estimate_mu_hayden(obs_by_arm[1], models[0], stratum)
    return mu0, mu1


def _table_values(
    data: Dataset, methods: Sequence[PceMethod], covariates: Sequence[str] | None
) -> np.ndarray:
    """All table cells in (method, stratum, quantity) order; NaN = inestimable."""
    out: list[float] = []
    crossover = _is_crossover(data)

    ps_cells: dict[StratumLabel, tuple[float, float]] = {}
    if PceMethod.PS in methods:
        arm0_all, arm1_all = _split_parallel(data)
        fit0 = [o for o in arm0_all if o.a is not None]
        fit1 = [o for o in arm1_all if o.a is not None]
        if not fit0 or not fit1:
            raise InsufficientDataError("need adherence observations in both arms")
        models = (fit_principal_score(fit0, covariates), fit_principal_score(fit1, covariates))
        use0 = [o for o in arm0_all if o.a is not None and o.y is not None]
        use1 = [o for o in arm1_all if o.a is not None and o.y is not None]
        for stratum in JOINT_LABELS:
            try:
                ps_cells[stratum] = _hayden_cell((use0, use1), models, stratum)
            except (InestimableStratumError, InsufficientDataError):
                ps_cells[stratum] = (np.nan, np.nan)

    direct_cells: dict[StratumLabel, tuple[float, float]] = {}
    if PceMethod.DIRECT in methods:
        if not crossover:
            raise PcekitError("direct stratification needs crossover records")
        comp = completer_filter(list(data), CompleterRule.BOTH)  # type: ignore[arg-type]
        for stratum in JOINT_LABELS:
            try:
                direct_cells[stratum] = (
                    estimate_mu_direct(comp, stratum, 0),
                    estimate_mu_direct(comp, stratum, 1),
                )
            except (InestimableStratumError, InsufficientDataError):
                direct_cells[stratum] = (np.nan, np.nan)

    for method in methods:
        cells = ps_cells if method is PceMethod.PS else direct_cells
        for stratum in JOINT_LABELS:
            mu0, mu1 = cells[stratum]
            out.extend([mu0, mu1, mu1 - mu0])
    return np.asarray(out)


def estimate_pce_table(
    data: Dataset,
    methods: Sequence[PceMethod] = (PceMethod.PS, PceMethod.DIRECT),
    covariates: Sequence[str] | None = None,
    bootstrap_spec: BootstrapSpec | None = None,
) -> list[EstimateSummary]:
    """Per-stratum arm means and treatment contrasts by the requested methods.

    Crossover records support both methods; parallel observations support
    only principal-score weighting. Bootstrap resampling is at the subject
    level and refits all models inside each replicate; cells inestimable on
    the full data carry NaN points and a note instead of failing the table.
    """
    data = list(data)
    if not data:
        raise InsufficientDataError("no data")
    methods = list(dict.fromkeys(methods))
    if not methods:
        raise ValueError("at least one method required")
    points = _table_values(data, methods, covariates)

    boot = None
    if bootstrap_spec is not None:
        boot = bootstrap_vector(
            data, lambda sample: _table_values(sample, methods, covariates), bootstrap_spec
        )

    rows: list[EstimateSummary] = []
    i = 0
    for method in methods:
        for stratum in JOINT_LABELS:
            for quantity in QUANTITIES:
                point = float(points[i])
                inest = np.isnan(point)
                note = "inestimable on this data" if inest else None
                se = ci = n_eff = None
                if boot is not None and not inest:
                    se = float(boot.se[i])
                    ci = (float(boot.ci[i, 0]), float(boot.ci[i, 1]))
                    n_eff = int(boot.n_effective[i])
                rows.append(
                    EstimateSummary(
                        stratum=stratum,
                        quantity=quantity,
                        method=method,
                        point=point,
                        se=se,
                        ci=ci,
                        n_effective=n_eff,
                        note=note,
                    )
                )
                i += 1
    return rows
