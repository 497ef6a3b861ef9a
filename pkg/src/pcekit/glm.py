"""Ordinary least squares and IRLS logistic regression on dense designs.

Both fits are deterministic given their inputs. OLS solves the normal
equations directly and reports classical t-based inference; logistic
regression maximizes the Bernoulli likelihood by iteratively reweighted
least squares with step-halving, and reports non-convergence explicitly
(separation is flagged, never silently penalized away).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc, expit

from .errors import DegenerateResponseError, InsufficientDataError, SingularDesignError

GRADIENT_TOL = 1e-8
MAX_ITERATIONS = 100
DIVERGENCE_NORM = 1e6
# max |a - p| below this at the gradient stop means the fit is numerically
# perfect, which only separated data can achieve: no finite MLE exists
PERFECT_FIT_TOL = 1e-6


@dataclass(frozen=True)
class DesignMatrix:
    """Named n-by-q design; the first column is conventionally the intercept."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("design values must be a 2-D array")
        if self.values.shape[1] != len(self.names):
            raise ValueError(
                f"{len(self.names)} column names for {self.values.shape[1]} columns"
            )
        if len(set(self.names)) != len(self.names):
            raise ValueError("design column names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("design contains non-finite values")

    @classmethod
    def with_intercept(
        cls, names: Sequence[str], columns: Sequence[np.ndarray] | np.ndarray
    ) -> "DesignMatrix":
        """Assemble [1, columns...]; ``names`` labels the non-intercept columns."""
        if not len(names):
            raise ValueError("with_intercept needs columns; use intercept_only for none")
        cols = np.column_stack(columns)
        values = np.column_stack([np.ones(cols.shape[0]), cols])
        return cls(names=("intercept", *names), values=np.asarray(values, dtype=float))

    @classmethod
    def intercept_only(cls, n: int) -> "DesignMatrix":
        return cls(names=("intercept",), values=np.ones((n, 1)))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class OlsFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    sigma2: float
    dof: int

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


@dataclass(frozen=True)
class LogisticFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    converged: bool
    diverged: bool
    iterations: int
    final_gradient_norm: float
    deviance: float
    deviance_path: tuple[float, ...]

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def t_two_sided_p(t: float | np.ndarray, dof: int) -> float | np.ndarray:
    """P(|T_dof| >= |t|) via the regularized incomplete beta identity.

    For T ~ t with dof degrees of freedom, the two-sided tail equals
    I_x(dof/2, 1/2) evaluated at x = dof / (dof + t^2).
    """
    if dof <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {dof}")
    t_arr = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = dof / (dof + np.square(t_arr))
    x = np.where(np.isinf(t_arr), 0.0, x)
    p = betainc(dof / 2.0, 0.5, x)
    return float(p) if np.isscalar(t) or t_arr.ndim == 0 else p


def _check_full_rank(design: DesignMatrix) -> None:
    x = design.values
    if np.linalg.matrix_rank(x) == design.q:
        return
    # name a culprit: scan for the first column explained by its predecessors
    n = x.shape[0]
    for j in range(design.q):
        col = x[:, j]
        if j == 0:
            if float(np.linalg.norm(col)) <= 1e-12 * np.sqrt(n):
                raise SingularDesignError(f"design column {design.names[0]!r} is all zeros")
            continue
        resid = col - x[:, :j] @ np.linalg.lstsq(x[:, :j], col, rcond=None)[0]
        if float(np.linalg.norm(resid)) <= 1e-8 * max(float(np.linalg.norm(col)), 1.0):
            raise SingularDesignError(
                f"design column {design.names[j]!r} is linearly dependent on earlier columns"
            )
    # borderline rank deficiency: name the dominant component of the null vector
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    j = int(np.argmax(np.abs(vt[-1])))
    raise SingularDesignError(f"design is rank deficient near column {design.names[j]!r}")


def fit_ols(design: DesignMatrix, y: np.ndarray) -> OlsFit:
    """Least squares via the normal equations, with t statistics and p-values."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != design.n:
        raise ValueError(f"y must be a length-{design.n} vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    if design.n <= design.q:
        raise InsufficientDataError(
            f"need more rows than columns for inference: n={design.n}, q={design.q}"
        )
    _check_full_rank(design)
    x = design.values
    xtx = x.T @ x
    coef = np.linalg.solve(xtx, x.T @ y)
    resid = y - x @ coef
    dof = design.n - design.q
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(xtx)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    t = np.empty_like(coef)
    pos = se > 0
    t[pos] = coef[pos] / se[pos]
    t[~pos] = np.where(coef[~pos] == 0.0, 0.0, np.sign(coef[~pos]) * np.inf)
    p = np.asarray(t_two_sided_p(t, dof))
    return OlsFit(
        names=design.names,
        coefficients=coef,
        standard_errors=se,
        t_stats=t,
        p_values=p,
        sigma2=sigma2,
        dof=dof,
    )


def _bernoulli_deviance(a: np.ndarray, eta: np.ndarray) -> float:
    # -2 log L, written with logaddexp so saturated probabilities stay finite
    return float(2.0 * np.sum(a * np.logaddexp(0.0, -eta) + (1.0 - a) * np.logaddexp(0.0, eta)))


def fit_logistic(
    design: DesignMatrix,
    a: np.ndarray,
    tol: float = GRADIENT_TOL,
    max_iter: int = MAX_ITERATIONS,
    start: np.ndarray | None = None,
) -> LogisticFit:
    """Logistic MLE by IRLS with step-halving.

    Stops when max |gradient| <= tol or after max_iter updates; the converged
    flag reflects which. Divergence (coefficient norm beyond 1e6, a collapsed
    weight matrix, or a numerically perfect fit, all separation symptoms)
    yields converged=False and diverged=True rather than an exception.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.shape[0] != design.n:
        raise ValueError(f"a must be a length-{design.n} vector")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("a must be binary 0/1")
    if design.n < design.q:
        raise InsufficientDataError(
            f"need at least as many rows as columns: n={design.n}, q={design.q}"
        )
    if np.all(a == a[0]):
        raise DegenerateResponseError("response is constant; logistic fit is undefined")
    _check_full_rank(design)

    x = design.values
    beta = np.zeros(design.q) if start is None else np.asarray(start, dtype=float).copy()
    if beta.shape != (design.q,):
        raise ValueError(f"start must have shape ({design.q},)")
    eta = x @ beta
    p = expit(eta)
    dev = _bernoulli_deviance(a, eta)
    path = [dev]
    converged = False
    diverged = False
    iterations = 0
    grad = x.T @ (a - p)
    gnorm = float(np.max(np.abs(grad)))

    for _ in range(max_iter):
        if gnorm <= tol:
            if float(np.max(np.abs(a - p))) < PERFECT_FIT_TOL:
                diverged = True  # perfect fit certifies separation
            else:
                converged = True
            break
        w = p * (1.0 - p)
        hess = (x * w[:, None]).T @ x
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            diverged = True
            break
        step = 1.0
        improved = False
        for _ in range(30):
            cand = beta + step * delta
            eta_c = x @ cand
            dev_c = _bernoulli_deviance(a, eta_c)
            if dev_c <= dev + 1e-12:
                improved = True
                break
            step *= 0.5
        if not improved:
            break  # stalled: no improving step along the Newton direction
        beta, eta, dev = cand, eta_c, dev_c
        p = expit(eta)
        iterations += 1
        path.append(dev)
        grad = x.T @ (a - p)
        gnorm = float(np.max(np.abs(grad)))
        if float(np.max(np.abs(beta))) > DIVERGENCE_NORM:
            diverged = True
            break
    else:
        pass  # iteration cap: converged stays False

    if not converged and not diverged and gnorm <= tol:
        # loop ended exactly at the cap with a small gradient
        if float(np.max(np.abs(a - p))) < PERFECT_FIT_TOL:
            diverged = True
        else:
            converged = True

    return LogisticFit(
        names=design.names,
        coefficients=beta,
        converged=converged,
        diverged=diverged,
        iterations=iterations,
        final_gradient_norm=gnorm,
        deviance=dev,
        deviance_path=tuple(path),
    )


def predict_prob(fit: LogisticFit, x_row: Sequence[float] | np.ndarray) -> float:
    """Fitted probability for one design row (include the intercept's 1)."""
    row = np.asarray(x_row, dtype=float)
    if row.shape != (len(fit.names),):
        raise ValueError(f"expected a length-{len(fit.names)} design row")
    return float(expit(row @ fit.coefficients))


def predict_probs(fit: LogisticFit, x: np.ndarray) -> np.ndarray:
    """Fitted probabilities for a design matrix with matching columns."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(fit.names):
        raise ValueError(f"expected an (n, {len(fit.names)}) design")
    return expit(x @ fit.coefficients)
