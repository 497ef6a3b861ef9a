"""Synthetic 2x2 crossover trials with a principal-stratum ground truth.

The generator draws one baseline covariate and a 4-dimensional Gaussian
noise vector per subject (adherence latents for each arm, outcome noises
for each arm). Adherence is a threshold crossing, so the three correlation
knobs translate directly into assumption violations:

* rho_within links an arm's adherence latent to the same arm's outcome
  noise (breaks within-treatment ignorability),
* rho_cross links it to the opposite arm's outcome noise (breaks
  cross-world ignorability),
* rho_strata links the two adherence latents (breaks conditional
  cross-world independence of the potential adherences).

The two outcome noises are uncorrelated by construction. Period effects and
carry-over distort only the observed period outcomes, never the potential
outcomes the truth table is computed from.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import JOINT_LABELS, StratumLabel, SubjectRecord, TreatmentSequence
from .errors import ConfigError

_TRIAL_STREAM = 0
_ORACLE_STREAM = 1

MIN_ORACLE_N = 10_000


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating process for a two-period, two-treatment crossover.

    Per-arm pairs are ordered (control, experimental). The adherence latent
    for arm t is eta[t] + beta[t]*x + noise; the potential outcome is
    gamma[t] + delta[t]*x + sigma[t]*noise. The observed period-2 outcome
    adds pi_period plus lambda_carry times the period-1 outcome.
    """

    n_subjects: int
    seed: int = 0
    mu_x: float = 0.0
    sigma_x: float = 1.0
    eta: tuple[float, float] = (0.0, 0.0)
    beta: tuple[float, float] = (0.0, 0.0)
    gamma: tuple[float, float] = (0.0, 0.0)
    delta: tuple[float, float] = (0.0, 0.0)
    sigma: tuple[float, float] = (1.0, 1.0)
    rho_within: float = 0.0
    rho_cross: float = 0.0
    rho_strata: float = 0.0
    pi_period: float = 0.0
    lambda_carry: float = 0.0
    missing_y_prob: tuple[float, float] = (0.0, 0.0)
    covariate_name: str = "x_base"

    def __post_init__(self) -> None:
        if self.n_subjects < 2:
            raise ConfigError("n_subjects must be at least 2")
        if self.sigma_x <= 0:
            raise ConfigError("sigma_x must be positive")
        for name in ("eta", "beta", "gamma", "delta", "sigma", "missing_y_prob"):
            pair = getattr(self, name)
            if len(pair) != 2:
                raise ConfigError(f"{name} must be a (control, experimental) pair")
        if min(self.sigma) <= 0:
            raise ConfigError("outcome noise scales must be positive")
        for p in self.missing_y_prob:
            if not 0.0 <= p < 1.0:
                raise ConfigError("missing_y_prob entries must be in [0, 1)")
        for name in ("rho_within", "rho_cross", "rho_strata"):
            if abs(getattr(self, name)) > 1.0:
                raise ConfigError(f"{name} must lie in [-1, 1]")
        if not self.covariate_name.startswith("x_"):
            raise ConfigError("covariate_name must carry the x_ column prefix")
        low = float(np.min(np.linalg.eigvalsh(self.correlation_matrix())))
        if low < -1e-9:
            raise ConfigError(
                f"correlation knobs give a non-positive-semidefinite matrix "
                f"(smallest eigenvalue {low:.3e}); weaken one of the rho values"
            )

    def correlation_matrix(self) -> np.ndarray:
        """Noise correlation in (adh0, adh1, out0, out1) order."""
        rw, rc, rs = self.rho_within, self.rho_cross, self.rho_strata
        return np.array(
            [
                [1.0, rs, rw, rc],
                [rs, 1.0, rc, rw],
                [rw, rc, 1.0, 0.0],
                [rc, rw, 0.0, 1.0],
            ]
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        kwargs = {}
        fields = {f.name for f in dataclasses.fields(cls)}
        for k, v in d.items():
            if k not in fields:
                raise ConfigError(f"unknown config key {k!r}")
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _draw_population(
    config: DgpConfig, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariates, potential adherences (n,2), potential outcomes (n,2)."""
    x = config.mu_x + config.sigma_x * rng.standard_normal(n)
    eps = rng.multivariate_normal(
        np.zeros(4), config.correlation_matrix(), size=n, method="eigh"
    )
    a = np.empty((n, 2), dtype=np.int64)
    y = np.empty((n, 2))
    for t in (0, 1):
        a[:, t] = (config.eta[t] + config.beta[t] * x + eps[:, t] > 0.0).astype(np.int64)
        y[:, t] = config.gamma[t] + config.delta[t] * x + config.sigma[t] * eps[:, 2 + t]
    return x, a, y


def generate_trial(config: DgpConfig) -> list[SubjectRecord]:
    """One simulated trial; sequences are randomized 1:1 (EF gets the odd slot)."""
    n = config.n_subjects
    rng = _stream(config.seed, _TRIAL_STREAM)
    x, a, y_pot = _draw_population(config, rng, n)
    perm = rng.permutation(n)
    miss = rng.random((n, 2))

    ef = np.zeros(n, dtype=bool)
    ef[perm[: (n + 1) // 2]] = True

    width = len(str(n))
    records: list[SubjectRecord] = []
    for i in range(n):
        seq = TreatmentSequence.EXPERIMENTAL_FIRST if ef[i] else TreatmentSequence.CONTROL_FIRST
        t1, t2 = seq.treatments
        y1 = float(y_pot[i, t1])
        y2 = float(y_pot[i, t2] + config.pi_period + config.lambda_carry * y1)
        # missingness is sampled per arm; carry-over always uses the realized
        # period-1 value even when that value is subsequently masked
        y_by_period: dict[int, float | None] = {1: y1, 2: y2}
        for t in (0, 1):
            if miss[i, t] < config.missing_y_prob[t]:
                y_by_period[1 if t1 == t else 2] = None
        records.append(
            SubjectRecord(
                subject_id=f"s{i + 1:0{width}d}",
                covariate_names=(config.covariate_name,),
                covariates=(float(x[i]),),
                sequence=seq,
                a_p1=int(a[i, t1]),
                a_p2=int(a[i, t2]),
                y_p1=y_by_period[1],
                y_p2=y_by_period[2],
            )
        )
    return records


@dataclass(frozen=True)
class TruthRow:
    stratum: StratumLabel
    probability: float
    prob_mc_se: float
    mu0: float
    mu1: float
    pce: float
    pce_mc_se: float
    n_members: int


@dataclass(frozen=True)
class TruthTable:
    """Monte Carlo ground truth for a config, from an independent oracle draw."""

    rows: tuple[TruthRow, ...]
    oracle_n: int
    seed: int

    def row(self, stratum: StratumLabel) -> TruthRow:
        for r in self.rows:
            if r.stratum == stratum:
                return r
        raise KeyError(str(stratum))

    def to_dict(self) -> dict:
        return {
            "oracle_n": self.oracle_n,
            "seed": self.seed,
            "strata": {
                str(r.stratum): {
                    "probability": r.probability,
                    "prob_mc_se": r.prob_mc_se,
                    "mu0": r.mu0,
                    "mu1": r.mu1,
                    "pce": r.pce,
                    "pce_mc_se": r.pce_mc_se,
                    "n_members": r.n_members,
                }
                for r in self.rows
            },
        }

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path: str | Path) -> None:
        header = "stratum,probability,prob_mc_se,mu0,mu1,pce,pce_mc_se,n_members"
        lines = [header]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        str(r.stratum),
                        repr(r.probability),
                        repr(r.prob_mc_se),
                        repr(r.mu0),
                        repr(r.mu1),
                        repr(r.pce),
                        repr(r.pce_mc_se),
                        str(r.n_members),
                    ]
                )
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def true_pce(config: DgpConfig, oracle_n: int = 100_000) -> TruthTable:
    """Stratum probabilities and PCEs from a fresh oracle draw.

    The oracle stream is separate from the trial stream under the same seed,
    so the truth is independent of any generated trial of that config.
    """
    if oracle_n < MIN_ORACLE_N:
        raise ConfigError(f"oracle_n must be at least {MIN_ORACLE_N}")
    rng = _stream(config.seed, _ORACLE_STREAM)
    _, a, y = _draw_population(config, rng, oracle_n)
    diff = y[:, 1] - y[:, 0]
    rows = []
    for stratum in JOINT_LABELS:
        mask = (a[:, 0] == stratum.a0) & (a[:, 1] == stratum.a1)
        n_s = int(np.sum(mask))
        if n_s < 2:
            raise ConfigError(
                f"stratum {stratum} has {n_s} oracle members; increase oracle_n "
                "or check the config (the stratum may be structurally empty)"
            )
        p = n_s / oracle_n
        d = diff[mask]
        rows.append(
            TruthRow(
                stratum=stratum,
                probability=p,
                prob_mc_se=float(np.sqrt(p * (1.0 - p) / oracle_n)),
                mu0=float(np.mean(y[mask, 0])),
                mu1=float(np.mean(y[mask, 1])),
                pce=float(np.mean(d)),
                pce_mc_se=float(np.std(d, ddof=1) / np.sqrt(n_s)),
                n_members=n_s,
            )
        )
    return TruthTable(rows=tuple(rows), oracle_n=oracle_n, seed=config.seed)


# Preset scenarios. The shared outcome scale loosely mirrors a glucose
# variability endpoint: baseline ~ N(41.3, 22.4^2), changes of a few units
# with ~23-unit noise, adherence near 45% in both arms.
_BASE = dict(
    n_subjects=163,
    mu_x=41.3,
    sigma_x=22.4,
    eta=(0.757, 0.95),
    beta=(-0.0219, -0.0219),
    gamma=(17.25, 18.95),
    delta=(-0.5, -0.5),
    sigma=(22.8, 22.8),
)

_SCENARIOS: dict[str, dict] = {
    # all assumptions hold except within-arm ignorability, which the
    # weighting estimators do not need; monotonicity genuinely fails
    "paper_like": dict(_BASE, rho_within=0.9),
    # shared adherence latent plus a fixed threshold shift: A(1) >= A(0) always
    "monotone": dict(
        _BASE,
        eta=(-2.445, -1.945),
        beta=(0.05, 0.05),
        rho_strata=1.0,
    ),
    # own-arm adherence-outcome dependence only, no treatment effect at all
    "a3p_violated": dict(_BASE, gamma=(17.25, 17.25), delta=(-0.5, -0.5), rho_within=0.9),
    # cross-world adherence-outcome dependence only
    "a3pp_violated": dict(_BASE, rho_cross=0.6),
    # potential adherences correlated beyond what X explains
    "a4p_violated": dict(_BASE, rho_strata=0.8),
    # strong carry-over plus a period shift on top of the paper-like base
    "carryover_heavy": dict(_BASE, rho_within=0.9, pi_period=8.0, lambda_carry=0.5),
}


def scenario_names() -> tuple[str, ...]:
    return tuple(sorted(_SCENARIOS))


def scenario(name: str, n_subjects: int | None = None, seed: int | None = None) -> DgpConfig:
    """A named preset; n_subjects and seed may be overridden."""
    if name not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(scenario_names())}")
    kwargs = dict(_SCENARIOS[name])
    if n_subjects is not None:
        kwargs["n_subjects"] = n_subjects
    if seed is not None:
        kwargs["seed"] = seed
    return DgpConfig(**kwargs)
