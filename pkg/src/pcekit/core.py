"""Data model and I/O for two-period crossover and parallel-arm trial data.

A crossover subject contributes one row with both period observations; the
treatment indicator is 0 for control and 1 for experimental. Missing values
are represented as ``None`` in memory and as ``NA`` on disk (empty cells are
accepted on read). Floats are written with ``repr`` so a write/read cycle is
bit-exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import InsufficientDataError, MissingDataError, SchemaError

MISSING_TOKEN = "NA"

_CROSSOVER_FIXED_TAIL = ("t_p1", "t_p2", "a_p1", "a_p2", "y_p1", "y_p2")
_COVARIATE_PREFIX = "x_"


class TreatmentSequence(Enum):
    """Randomized period order: control-first (CF) or experimental-first (EF)."""

    CONTROL_FIRST = "CF"
    EXPERIMENTAL_FIRST = "EF"

    @property
    def treatments(self) -> tuple[int, int]:
        """Treatment indicators for (period 1, period 2)."""
        if self is TreatmentSequence.CONTROL_FIRST:
            return (0, 1)
        return (1, 0)


class CompleterRule(Enum):
    """Which fields must be non-missing in both periods to keep a subject."""

    OUTCOME = "outcome"
    STRATUM_VAR = "stratum_var"
    BOTH = "both"


@dataclass(frozen=True)
class SubjectRecord:
    """One crossover subject: covariates plus both period observations."""

    subject_id: str
    covariate_names: tuple[str, ...]
    covariates: tuple[float, ...]
    sequence: TreatmentSequence
    a_p1: int | None
    a_p2: int | None
    y_p1: float | None
    y_p2: float | None

    def __post_init__(self) -> None:
        if len(self.covariate_names) != len(self.covariates):
            raise SchemaError(
                f"subject {self.subject_id!r}: {len(self.covariate_names)} covariate "
                f"names but {len(self.covariates)} values"
            )
        for a, col in ((self.a_p1, "a_p1"), (self.a_p2, "a_p2")):
            if a is not None and a not in (0, 1):
                raise SchemaError(f"subject {self.subject_id!r}: {col}={a!r} not in {{0,1}}")

    @property
    def t_p1(self) -> int:
        return self.sequence.treatments[0]

    @property
    def t_p2(self) -> int:
        return self.sequence.treatments[1]

    def period_of_arm(self, t: int) -> int:
        """Period (1 or 2) in which treatment arm t was received."""
        if t not in (0, 1):
            raise ValueError(f"treatment arm must be 0 or 1, got {t!r}")
        return 1 if self.t_p1 == t else 2

    def a_for_arm(self, t: int) -> int | None:
        return self.a_p1 if self.period_of_arm(t) == 1 else self.a_p2

    def y_for_arm(self, t: int) -> float | None:
        return self.y_p1 if self.period_of_arm(t) == 1 else self.y_p2


@dataclass(frozen=True)
class ParallelObservation:
    """One subject-arm observation in parallel form.

    ``r`` is the response indicator: 1 when ``y`` is observed, else 0.
    """

    subject_id: str
    covariate_names: tuple[str, ...]
    covariates: tuple[float, ...]
    t: int
    a: int | None
    y: float | None

    def __post_init__(self) -> None:
        if self.t not in (0, 1):
            raise SchemaError(f"subject {self.subject_id!r}: t={self.t!r} not in {{0,1}}")
        if self.a is not None and self.a not in (0, 1):
            raise SchemaError(f"subject {self.subject_id!r}: a={self.a!r} not in {{0,1}}")
        if len(self.covariate_names) != len(self.covariates):
            raise SchemaError(
                f"subject {self.subject_id!r}: {len(self.covariate_names)} covariate "
                f"names but {len(self.covariates)} values"
            )

    @property
    def r(self) -> int:
        return 0 if self.y is None else 1


@dataclass(frozen=True)
class StratumLabel:
    """Principal stratum by potential adherence (a0, a1) = (A(0), A(1)).

    ``None`` marks a marginalized coordinate: S_k* has a1=None, S_*l has
    a0=None. At least one coordinate must be specified.
    """

    a0: int | None
    a1: int | None

    def __post_init__(self) -> None:
        if self.a0 is None and self.a1 is None:
            raise ValueError("a stratum label needs at least one specified coordinate")
        for v in (self.a0, self.a1):
            if v is not None and v not in (0, 1):
                raise ValueError(f"stratum coordinates must be 0, 1, or None, got {v!r}")

    @classmethod
    def joint(cls, a0: int, a1: int) -> "StratumLabel":
        return cls(a0, a1)

    @classmethod
    def marginal_control(cls, a0: int) -> "StratumLabel":
        """S_k*: subjects with A(0)=a0, either A(1)."""
        return cls(a0, None)

    @classmethod
    def marginal_experimental(cls, a1: int) -> "StratumLabel":
        """S_*l: subjects with A(1)=a1, either A(0)."""
        return cls(None, a1)

    @property
    def is_joint(self) -> bool:
        return self.a0 is not None and self.a1 is not None

    def joint_components(self) -> tuple["StratumLabel", "StratumLabel"]:
        """The two joint strata a marginal label aggregates over."""
        if self.is_joint:
            return (self, self)
        if self.a0 is not None:
            return (StratumLabel(self.a0, 0), StratumLabel(self.a0, 1))
        return (StratumLabel(0, self.a1), StratumLabel(1, self.a1))

    def contains(self, a0: int, a1: int) -> bool:
        return (self.a0 is None or self.a0 == a0) and (self.a1 is None or self.a1 == a1)

    def __str__(self) -> str:
        k = "*" if self.a0 is None else str(self.a0)
        l_ = "*" if self.a1 is None else str(self.a1)
        return f"S{k}{l_}"


JOINT_LABELS: tuple[StratumLabel, ...] = (
    StratumLabel(0, 0),
    StratumLabel(0, 1),
    StratumLabel(1, 0),
    StratumLabel(1, 1),
)


@dataclass(frozen=True)
class StratumTable:
    """Counts of subjects per joint principal stratum."""

    counts: dict[StratumLabel, int]
    n_total: int

    def __post_init__(self) -> None:
        if set(self.counts) != set(JOINT_LABELS):
            raise ValueError("counts must cover exactly the four joint strata")
        if sum(self.counts.values()) != self.n_total:
            raise ValueError("stratum counts do not sum to n_total")
        if self.n_total <= 0:
            raise InsufficientDataError("cannot tabulate strata with no classified subjects")

    @property
    def proportions(self) -> dict[StratumLabel, float]:
        return {lab: c / self.n_total for lab, c in self.counts.items()}

    def proportion(self, label: StratumLabel) -> float:
        """Proportion in a joint or marginal stratum."""
        if label.is_joint:
            return self.counts[label] / self.n_total
        c0, c1 = label.joint_components()
        return (self.counts[c0] + self.counts[c1]) / self.n_total


def _parse_int01(token: str, what: str, row: int) -> int | None:
    token = token.strip()
    if token == "" or token == MISSING_TOKEN:
        return None
    if token in ("0", "1"):
        return int(token)
    raise SchemaError(f"row {row}: {what}={token!r} is not 0, 1, or missing")


def _parse_float(token: str, what: str, row: int, allow_missing: bool) -> float | None:
    token = token.strip()
    if token == "" or token == MISSING_TOKEN:
        if allow_missing:
            return None
        raise SchemaError(f"row {row}: {what} may not be missing")
    try:
        return float(token)
    except ValueError as exc:
        raise SchemaError(f"row {row}: {what}={token!r} is not a number") from exc


def _format_value(v: float | int | None) -> str:
    if v is None:
        return MISSING_TOKEN
    if isinstance(v, bool):  # guard against accidental bools
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _split_header(
    header: Sequence[str], fixed_head: tuple[str, ...], fixed_tail: tuple[str, ...]
) -> tuple[str, ...]:
    """Validate a header of the form head + x_* columns + tail; return x_ names."""
    n_head, n_tail = len(fixed_head), len(fixed_tail)
    if len(header) < n_head + n_tail:
        raise SchemaError(f"header has {len(header)} columns, needs at least {n_head + n_tail}")
    if tuple(header[:n_head]) != fixed_head:
        raise SchemaError(f"header must start with {','.join(fixed_head)}")
    if n_tail and tuple(header[-n_tail:]) != fixed_tail:
        raise SchemaError(f"header must end with {','.join(fixed_tail)}")
    names = tuple(header[n_head : len(header) - n_tail])
    for name in names:
        if not name.startswith(_COVARIATE_PREFIX):
            raise SchemaError(f"covariate column {name!r} must be prefixed {_COVARIATE_PREFIX!r}")
    if len(set(names)) != len(names):
        raise SchemaError("duplicate covariate columns in header")
    return names


def _read_rows(path: str | Path) -> list[list[str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    return rows


def load_crossover_csv(path: str | Path) -> list[SubjectRecord]:
    """Read crossover records; schema and consistency problems name the row."""
    rows = _read_rows(path)
    names = _split_header(rows[0], ("subject_id", "sequence"), _CROSSOVER_FIXED_TAIL)
    width = 2 + len(names) + len(_CROSSOVER_FIXED_TAIL)
    records: list[SubjectRecord] = []
    seen_ids: set[str] = set()
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise SchemaError(f"row {i}: expected {width} cells, got {len(row)}")
        sid = row[0].strip()
        if not sid:
            raise SchemaError(f"row {i}: empty subject_id")
        if sid in seen_ids:
            raise SchemaError(f"row {i}: duplicate subject_id {sid!r}")
        seen_ids.add(sid)
        seq_token = row[1].strip()
        try:
            seq = TreatmentSequence(seq_token)
        except ValueError as exc:
            raise SchemaError(f"row {i}: sequence={seq_token!r} not in {{CF,EF}}") from exc
        covs = tuple(
            _parse_float(tok, f"{names[j]}", i, allow_missing=False)  # type: ignore[misc]
            for j, tok in enumerate(row[2 : 2 + len(names)])
        )
        tail = row[2 + len(names) :]
        t1 = _parse_int01(tail[0], "t_p1", i)
        t2 = _parse_int01(tail[1], "t_p2", i)
        if (t1, t2) != seq.treatments:
            raise SchemaError(
                f"row {i}: treatments ({tail[0]},{tail[1]}) inconsistent with sequence {seq.value}"
            )
        records.append(
            SubjectRecord(
                subject_id=sid,
                covariate_names=names,
                covariates=covs,  # type: ignore[arg-type]
                sequence=seq,
                a_p1=_parse_int01(tail[2], "a_p1", i),
                a_p2=_parse_int01(tail[3], "a_p2", i),
                y_p1=_parse_float(tail[4], "y_p1", i, allow_missing=True),
                y_p2=_parse_float(tail[5], "y_p2", i, allow_missing=True),
            )
        )
    return records


def write_crossover_csv(records: Sequence[SubjectRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("refusing to write an empty record list")
    names = records[0].covariate_names
    for rec in records:
        if rec.covariate_names != names:
            raise SchemaError("records disagree on covariate columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "sequence", *names, *_CROSSOVER_FIXED_TAIL])
        for rec in records:
            writer.writerow(
                [
                    rec.subject_id,
                    rec.sequence.value,
                    *(_format_value(v) for v in rec.covariates),
                    rec.t_p1,
                    rec.t_p2,
                    _format_value(rec.a_p1),
                    _format_value(rec.a_p2),
                    _format_value(rec.y_p1),
                    _format_value(rec.y_p2),
                ]
            )


def load_parallel_csv(path: str | Path) -> list[ParallelObservation]:
    """Read parallel-arm observations (one subject-arm row each)."""
    rows = _read_rows(path)
    names = _split_header(rows[0], ("subject_id", "treatment"), ("a", "y"))
    width = 2 + len(names) + 2
    obs: list[ParallelObservation] = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise SchemaError(f"row {i}: expected {width} cells, got {len(row)}")
        sid = row[0].strip()
        if not sid:
            raise SchemaError(f"row {i}: empty subject_id")
        t = _parse_int01(row[1], "treatment", i)
        if t is None:
            raise SchemaError(f"row {i}: treatment may not be missing")
        covs = tuple(
            _parse_float(tok, f"{names[j]}", i, allow_missing=False)  # type: ignore[misc]
            for j, tok in enumerate(row[2 : 2 + len(names)])
        )
        obs.append(
            ParallelObservation(
                subject_id=sid,
                covariate_names=names,
                covariates=covs,  # type: ignore[arg-type]
                t=t,
                a=_parse_int01(row[-2], "a", i),
                y=_parse_float(row[-1], "y", i, allow_missing=True),
            )
        )
    return obs


def write_parallel_csv(obs: Sequence[ParallelObservation], path: str | Path) -> None:
    if not obs:
        raise ValueError("refusing to write an empty observation list")
    names = obs[0].covariate_names
    for o in obs:
        if o.covariate_names != names:
            raise SchemaError("observations disagree on covariate columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "treatment", *names, "a", "y"])
        for o in obs:
            writer.writerow(
                [
                    o.subject_id,
                    o.t,
                    *(_format_value(v) for v in o.covariates),
                    _format_value(o.a),
                    _format_value(o.y),
                ]
            )


def as_parallel(records: Sequence[SubjectRecord], t: int) -> list[ParallelObservation]:
    """Project each subject's arm-t period into a parallel observation."""
    if t not in (0, 1):
        raise ValueError(f"treatment arm must be 0 or 1, got {t!r}")
    return [
        ParallelObservation(
            subject_id=rec.subject_id,
            covariate_names=rec.covariate_names,
            covariates=rec.covariates,
            t=t,
            a=rec.a_for_arm(t),
            y=rec.y_for_arm(t),
        )
        for rec in records
    ]


def completer_filter(
    records: Sequence[SubjectRecord], require: CompleterRule
) -> list[SubjectRecord]:
    """Keep subjects with the required fields observed in both periods."""

    def ok(rec: SubjectRecord) -> bool:
        has_y = rec.y_p1 is not None and rec.y_p2 is not None
        has_a = rec.a_p1 is not None and rec.a_p2 is not None
        if require is CompleterRule.OUTCOME:
            return has_y
        if require is CompleterRule.STRATUM_VAR:
            return has_a
        return has_y and has_a

    return [rec for rec in records if ok(rec)]


def classify_strata(records: Sequence[SubjectRecord]) -> StratumTable:
    """Tabulate joint strata from crossover adherence in both arms.

    All records must have a observed in both periods; apply
    ``completer_filter(records, CompleterRule.STRATUM_VAR)`` first if not.
    """
    if not records:
        raise InsufficientDataError("no records to classify")
    counts = {lab: 0 for lab in JOINT_LABELS}
    for rec in records:
        a0, a1 = rec.a_for_arm(0), rec.a_for_arm(1)
        if a0 is None or a1 is None:
            raise MissingDataError(
                f"subject {rec.subject_id!r} has missing adherence; apply "
                "completer_filter(records, CompleterRule.STRATUM_VAR) first"
            )
        counts[StratumLabel(a0, a1)] += 1
    return StratumTable(counts=counts, n_total=len(records))


def subject_filter(
    records: Sequence[SubjectRecord], pred: Callable[[SubjectRecord], bool]
) -> list[SubjectRecord]:
    return [rec for rec in records if pred(rec)]


def derive_adherence(
    records: Iterable[SubjectRecord], rule: Callable[[float], int]
) -> list[SubjectRecord]:
    """Fill adherence from observed outcomes via a threshold-style rule.

    Periods with missing y keep a missing a.
    """
    out: list[SubjectRecord] = []
    for rec in records:
        out.append(
            SubjectRecord(
                subject_id=rec.subject_id,
                covariate_names=rec.covariate_names,
                covariates=rec.covariates,
                sequence=rec.sequence,
                a_p1=None if rec.y_p1 is None else rule(rec.y_p1),
                a_p2=None if rec.y_p2 is None else rule(rec.y_p2),
                y_p1=rec.y_p1,
                y_p2=rec.y_p2,
            )
        )
    return out
