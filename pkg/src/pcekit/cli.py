"""Command-line front end: simulate, estimate, diagnose, replicate.

All randomness in a command flows from one --seed, so a rerun with the same
arguments and inputs produces byte-identical output files. Exit codes: 0 on
success, 1 for data or estimation errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import re
import sys
from pathlib import Path
from typing import Callable, Sequence

from . import core, diagnostics, estimators, resampling, simulator
from .core import CompleterRule, JOINT_LABELS
from .errors import ConfigError, PcekitError

OUT_DIR_ENV = "PCEKIT_OUT_DIR"
FORMATS = ("md", "csv", "json")


def _out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _fmt_float(v: float | None, places: int = 4) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.{places}f}"


def _repr_or_na(v: float | None) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return repr(float(v))


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        print(f"wrote {out}")


def _json_text(obj: object) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def _config_digest(config: simulator.DgpConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _parse_derive_rule(rule: str) -> Callable[[float], int]:
    m = re.fullmatch(r"\s*y\s*(>=|<=|>|<)\s*(-?\d+(?:\.\d+)?)\s*", rule)
    if m is None:
        raise ConfigError(
            f"cannot parse adherence rule {rule!r}; expected like 'y>0' or 'y<=1.5'"
        )
    op, thr = m.group(1), float(m.group(2))
    ops: dict[str, Callable[[float], int]] = {
        ">": lambda y: int(y > thr),
        ">=": lambda y: int(y >= thr),
        "<": lambda y: int(y < thr),
        "<=": lambda y: int(y <= thr),
    }
    return ops[op]


def _parse_covariates(arg: str | None) -> tuple[str, ...] | None:
    if arg is None:
        return None
    if arg.strip().lower() == "none":
        return ()
    return tuple(s.strip() for s in arg.split(",") if s.strip())


def _load_config(args: argparse.Namespace) -> simulator.DgpConfig:
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = simulator.DgpConfig.from_dict(json.load(fh))
    else:
        config = simulator.scenario(args.scenario)
    updates: dict = {}
    if args.n is not None:
        updates["n_subjects"] = args.n
    if args.seed is not None:
        updates["seed"] = args.seed
    return dataclasses.replace(config, **updates) if updates else config


def _sniff_shape(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline()
    if head.startswith("subject_id,sequence"):
        return "crossover"
    if head.startswith("subject_id,treatment"):
        return "parallel"
    raise ConfigError(f"{path}: unrecognized header; not a crossover or parallel file")


def _load_dataset(args: argparse.Namespace):
    shape = args.data_shape or _sniff_shape(args.input)
    if shape == "crossover":
        data = core.load_crossover_csv(args.input)
    else:
        data = core.load_parallel_csv(args.input)
    if getattr(args, "derive_a", None):
        rule = _parse_derive_rule(args.derive_a)
        if shape == "crossover":
            data = core.derive_adherence(data, rule)
        else:
            data = [
                dataclasses.replace(o, a=None if o.y is None else rule(o.y)) for o in data
            ]
    return shape, data


# ---------------------------------------------------------------- simulate


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = args.out or str(_out_dir() / "trial.csv")
    truth_out = args.truth_out or str(Path(out).with_suffix("")) + "_truth.json"
    records = simulator.generate_trial(config)
    core.write_crossover_csv(records, out)
    truth = simulator.true_pce(config, args.oracle_n)
    if truth_out.endswith(".csv"):
        truth.write_csv(truth_out)
    else:
        truth.write_json(truth_out)
    print(f"wrote {out} ({len(records)} subjects)")
    print(f"wrote {truth_out} (oracle_n={args.oracle_n})")
    print(f"seed {config.seed}  config {_config_digest(config)}")
    return 0


# ---------------------------------------------------------------- estimate


def _estimate_rows(args: argparse.Namespace, data, methods) -> list[estimators.EstimateSummary]:
    covariates = _parse_covariates(args.covariates)
    spec = None
    if args.bootstrap > 0:
        spec = resampling.BootstrapSpec(
            n_replicates=args.bootstrap, seed=args.seed, ci_level=args.ci
        )
    return estimators.estimate_pce_table(
        data, methods=methods, covariates=covariates, bootstrap_spec=spec
    )


def _render_estimates(rows: list[estimators.EstimateSummary], fmt: str) -> str:
    if fmt == "json":
        return _json_text(
            [
                {
                    "stratum": str(r.stratum),
                    "method": r.method.value,
                    "quantity": r.quantity,
                    "point": None if math.isnan(r.point) else r.point,
                    "se": r.se,
                    "ci": list(r.ci) if r.ci else None,
                    "n_effective": r.n_effective,
                    "note": r.note,
                }
                for r in rows
            ]
        )
    if fmt == "csv":
        lines = ["stratum,method,quantity,point,se,lo,hi,n_effective,note"]
        for r in rows:
            lo, hi = (r.ci if r.ci else (None, None))
            lines.append(
                ",".join(
                    [
                        str(r.stratum),
                        r.method.value,
                        r.quantity,
                        _repr_or_na(r.point),
                        _repr_or_na(r.se),
                        _repr_or_na(lo),
                        _repr_or_na(hi),
                        "NA" if r.n_effective is None else str(r.n_effective),
                        r.note or "",
                    ]
                )
            )
        return "\n".join(lines) + "\n"
    # md: one row per stratum/method with the three quantities side by side
    by_key: dict[tuple, dict[str, estimators.EstimateSummary]] = {}
    for r in rows:
        by_key.setdefault((str(r.stratum), r.method.value), {})[r.quantity] = r

    def cell(r: estimators.EstimateSummary | None) -> str:
        if r is None:
            return ""
        if math.isnan(r.point):
            return "inestimable"
        text = _fmt_float(r.point, 3)
        if r.ci is not None:
            text += f" ({_fmt_float(r.ci[0], 3)}, {_fmt_float(r.ci[1], 3)})"
        return text

    table_rows = [
        [stratum, method, cell(q.get("arm0")), cell(q.get("arm1")), cell(q.get("diff"))]
        for (stratum, method), q in by_key.items()
    ]
    return (
        _md_table(
            ["Stratum", "Method", "Mean (control)", "Mean (experimental)", "Difference"],
            table_rows,
        )
        + "\n"
    )


def _cmd_estimate(args: argparse.Namespace) -> int:
    shape, data = _load_dataset(args)
    if args.method == "both":
        methods = [estimators.PceMethod.PS, estimators.PceMethod.DIRECT]
    else:
        methods = [estimators.PceMethod(args.method)]
    if shape == "parallel" and estimators.PceMethod.DIRECT in methods:
        raise ConfigError("direct stratification needs crossover data")
    rows = _estimate_rows(args, data, methods)
    _write_text(_render_estimates(rows, args.format), args.out)
    return 0


# ---------------------------------------------------------------- diagnose

CHECKS = ("monotonicity", "ignorability", "independence", "effects")


def _cmd_diagnose(args: argparse.Namespace) -> int:
    shape, data = _load_dataset(args)
    if shape != "crossover":
        raise ConfigError("diagnostics need crossover data")
    checks = CHECKS if args.checks == "all" else tuple(s.strip() for s in args.checks.split(","))
    for c in checks:
        if c not in CHECKS:
            raise ConfigError(f"unknown check {c!r}; choose from {', '.join(CHECKS)} or all")
    covariates = _parse_covariates(args.covariates)
    results: dict[str, dict] = {}
    notes: list[str] = []

    if "monotonicity" in checks:
        kept = core.completer_filter(data, CompleterRule.STRATUM_VAR)
        notes.append(f"monotonicity: {len(kept)}/{len(data)} adherence completers")
        report = diagnostics.monotonicity_report(
            kept, diagnostics.MonotonicityDirection(args.direction)
        )
        results["monotonicity"] = report.to_dict()
    if "ignorability" in checks:
        kept = core.completer_filter(data, CompleterRule.BOTH)
        notes.append(f"ignorability: {len(kept)}/{len(data)} full completers")
        results["ignorability"] = diagnostics.ignorability_regressions(kept, covariates).to_dict()
    if "independence" in checks:
        kept = core.completer_filter(data, CompleterRule.STRATUM_VAR)
        notes.append(f"independence: {len(kept)}/{len(data)} adherence completers")
        report = diagnostics.independence_test(
            kept,
            method=estimators.ProbMethod(args.indep_method),
            covariates=covariates,
            n_bootstrap=args.bootstrap,
            seed=args.seed,
        )
        results["independence"] = report.to_dict()
    if "effects" in checks:
        kept = core.completer_filter(data, CompleterRule.OUTCOME)
        notes.append(f"effects: {len(kept)}/{len(data)} outcome completers")
        results["effects"] = diagnostics.crossover_effects_test(kept).to_dict()

    _write_text(_render_diagnose(results, notes, args.format), args.out)
    return 0


def _render_diagnose(results: dict[str, dict], notes: list[str], fmt: str) -> str:
    if fmt == "json":
        return _json_text({"notes": notes, "results": results})
    if fmt == "csv":
        lines = ["section,key,value"]

        def emit(section: str, prefix: str, obj) -> None:
            items = obj.items() if isinstance(obj, dict) else enumerate(obj)
            for k, v in items:
                if isinstance(v, (dict, list)):
                    emit(section, f"{prefix}{k}.", v)
                else:
                    lines.append(f"{section},{prefix}{k},{v}")

        for section, obj in results.items():
            emit(section, "", obj)
        return "\n".join(lines) + "\n"

    parts: list[str] = []
    for note in notes:
        parts.append(f"- {note}")
    if notes:
        parts.append("")
    if "monotonicity" in results:
        d = results["monotonicity"]
        parts.append("## Monotonicity")
        parts.append("")
        parts.append(
            _md_table(
                ["Stratum", "Count", "Proportion"],
                [
                    [lab, str(d["counts"][lab]), _fmt_float(d["proportions"][lab], 3)]
                    for lab in sorted(d["counts"])
                ],
            )
        )
        parts.append("")
        parts.append(d["note"])
        parts.append("")
    if "ignorability" in results:
        d = results["ignorability"]
        parts.append("## Ignorability regressions")
        parts.append("")
        parts.append(
            _md_table(
                ["Outcome arm", "Adherence arm", "Coef (SE)", "p", "Adj mean a=0", "Adj mean a=1"],
                [
                    [
                        str(r["outcome_arm"]),
                        str(r["adherence_arm"]),
                        f"{_fmt_float(r['coefficient'], 2)} ({_fmt_float(r['standard_error'], 2)})",
                        _fmt_float(r["p_value"], 4),
                        _fmt_float(r["adjusted_mean_a0"], 2),
                        _fmt_float(r["adjusted_mean_a1"], 2),
                    ]
                    for r in d["regressions"]
                ],
            )
        )
        parts.append("")
    if "independence" in results:
        d = results["independence"]
        parts.append("## Cross-world independence")
        parts.append("")
        parts.append(
            _md_table(
                ["Stratum", "Observed", "Estimated"],
                [
                    [lab, _fmt_float(d["observed"][lab], 3), _fmt_float(d["estimated"][lab], 3)]
                    for lab in sorted(d["observed"])
                ],
            )
        )
        parts.append("")
        parts.append(
            f"max gap {_fmt_float(d['discrepancy'], 4)}, p = {_fmt_float(d['p_value'], 4)} "
            f"(sum-of-squares p = {_fmt_float(d['secondary_p_value'], 4)}; "
            f"{d['n_bootstrap']} resamples, {d['n_rejected']} rejected)"
        )
        parts.append("")
    if "effects" in results:
        d = results["effects"]
        parts.append("## Crossover effects")
        parts.append("")
        parts.append(
            _md_table(
                ["Effect", "Estimate", "t", "p"],
                [
                    [
                        "treatment",
                        _fmt_float(d["treatment_effect"], 3),
                        _fmt_float(d["treatment_t"], 3),
                        _fmt_float(d["treatment_p"], 4),
                    ],
                    [
                        "period",
                        _fmt_float(d["period_effect"], 3),
                        _fmt_float(d["period_t"], 3),
                        _fmt_float(d["period_p"], 4),
                    ],
                    [
                        "sequence (carry-over)",
                        "",
                        _fmt_float(d["sequence_t"], 3),
                        _fmt_float(d["sequence_p"], 4),
                    ],
                ],
            )
        )
        parts.append("")
    return "\n".join(parts)


# ---------------------------------------------------------------- replicate


def _cmd_replicate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.method == "both":
        methods = [estimators.PceMethod.PS, estimators.PceMethod.DIRECT]
    else:
        methods = [estimators.PceMethod(args.method)]
    covariates = _parse_covariates(args.covariates)

    sums: dict[tuple, dict[str, float]] = {
        (m.value, str(lab)): dict(n=0, bias=0.0, sq=0.0, cover=0.0, width=0.0, truth=0.0, est=0.0)
        for m in methods
        for lab in JOINT_LABELS
    }
    for k in range(args.replicates):
        cfg = dataclasses.replace(config, seed=config.seed + k)
        records = simulator.generate_trial(cfg)
        truth = simulator.true_pce(cfg, args.oracle_n)
        spec = None
        if args.bootstrap > 0:
            spec = resampling.BootstrapSpec(n_replicates=args.bootstrap, seed=cfg.seed)
        rows = estimators.estimate_pce_table(
            records, methods=methods, covariates=covariates, bootstrap_spec=spec
        )
        for r in rows:
            if r.quantity != "diff" or math.isnan(r.point):
                continue
            cell = sums[(r.method.value, str(r.stratum))]
            true_val = truth.row(r.stratum).pce
            cell["n"] += 1
            cell["truth"] += true_val
            cell["est"] += r.point
            cell["bias"] += r.point - true_val
            cell["sq"] += (r.point - true_val) ** 2
            if r.ci is not None:
                cell["cover"] += float(r.ci[0] <= true_val <= r.ci[1])
                cell["width"] += r.ci[1] - r.ci[0]

    agg = []
    for (method, stratum), cell in sums.items():
        n = int(cell["n"])
        entry = {
            "method": method,
            "stratum": stratum,
            "n_estimable": n,
            "mean_truth": cell["truth"] / n if n else None,
            "mean_estimate": cell["est"] / n if n else None,
            "bias": cell["bias"] / n if n else None,
            "rmse": math.sqrt(cell["sq"] / n) if n else None,
            "coverage": cell["cover"] / n if n and args.bootstrap > 0 else None,
            "mean_ci_width": cell["width"] / n if n and args.bootstrap > 0 else None,
        }
        agg.append(entry)

    if args.format == "json":
        text = _json_text({"replicates": args.replicates, "cells": agg})
    elif args.format == "csv":
        lines = ["method,stratum,n_estimable,mean_truth,mean_estimate,bias,rmse,coverage,mean_ci_width"]
        for e in agg:
            lines.append(
                ",".join(
                    [
                        e["method"],
                        e["stratum"],
                        str(e["n_estimable"]),
                        _repr_or_na(e["mean_truth"]),
                        _repr_or_na(e["mean_estimate"]),
                        _repr_or_na(e["bias"]),
                        _repr_or_na(e["rmse"]),
                        _repr_or_na(e["coverage"]),
                        _repr_or_na(e["mean_ci_width"]),
                    ]
                )
            )
        text = "\n".join(lines) + "\n"
    else:
        text = (
            _md_table(
                ["Method", "Stratum", "n", "Truth", "Estimate", "Bias", "RMSE", "Coverage"],
                [
                    [
                        e["method"],
                        e["stratum"],
                        str(e["n_estimable"]),
                        _fmt_float(e["mean_truth"], 3),
                        _fmt_float(e["mean_estimate"], 3),
                        _fmt_float(e["bias"], 3),
                        _fmt_float(e["rmse"], 3),
                        "NA" if e["coverage"] is None else _fmt_float(e["coverage"], 3),
                    ]
                    for e in agg
                ],
            )
            + "\n"
        )
    _write_text(text, args.out)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcekit",
        description="Principal causal effect estimation and crossover-based diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic crossover trial plus its truth")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", choices=simulator.scenario_names())
    src.add_argument("--config", help="JSON file of generator settings")
    sim.add_argument("--n", type=int, help="override the subject count")
    sim.add_argument("--seed", type=int, help="override the seed")
    sim.add_argument("--oracle-n", type=int, default=100_000)
    sim.add_argument("--out", help="dataset CSV path (default $PCEKIT_OUT_DIR/trial.csv)")
    sim.add_argument("--truth-out", help="truth table path (.json or .csv)")
    sim.set_defaults(func=_cmd_simulate)

    est = sub.add_parser("estimate", help="per-stratum means and treatment contrasts")
    est.add_argument("--input", required=True)
    est.add_argument("--data-shape", choices=("crossover", "parallel"))
    est.add_argument("--method", choices=("ps", "direct", "both"), default="both")
    est.add_argument("--covariates", help="comma-separated x_ columns, or 'none'")
    est.add_argument("--bootstrap", type=int, default=0, help="replicates (0 = no CIs)")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--ci", type=float, default=0.95)
    est.add_argument("--derive-a", help="adherence from outcomes, e.g. 'y>0'")
    est.add_argument("--format", choices=FORMATS, default="md")
    est.add_argument("--out")
    est.set_defaults(func=_cmd_estimate)

    dia = sub.add_parser("diagnose", help="assumption checks on crossover data")
    dia.add_argument("--input", required=True)
    dia.add_argument("--data-shape", choices=("crossover", "parallel"))
    dia.add_argument("--checks", default="all", help=f"comma list from {', '.join(CHECKS)}")
    dia.add_argument("--covariates", help="comma-separated x_ columns, or 'none'")
    dia.add_argument(
        "--direction",
        choices=[d.value for d in diagnostics.MonotonicityDirection],
        default="increasing",
    )
    dia.add_argument("--indep-method", choices=("cond-indep", "indep"), default="cond-indep")
    dia.add_argument("--bootstrap", type=int, default=500)
    dia.add_argument("--seed", type=int, default=0)
    dia.add_argument("--derive-a", help="adherence from outcomes, e.g. 'y>0'")
    dia.add_argument("--format", choices=FORMATS, default="md")
    dia.add_argument("--out")
    dia.set_defaults(func=_cmd_diagnose)

    rep = sub.add_parser("replicate", help="repeated simulate+estimate against the truth")
    src = rep.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", choices=simulator.scenario_names())
    src.add_argument("--config")
    rep.add_argument("--n", type=int)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--replicates", type=int, default=20)
    rep.add_argument("--method", choices=("ps", "direct", "both"), default="both")
    rep.add_argument("--covariates")
    rep.add_argument("--bootstrap", type=int, default=0)
    rep.add_argument("--oracle-n", type=int, default=100_000)
    rep.add_argument("--format", choices=FORMATS, default="md")
    rep.add_argument("--out")
    rep.set_defaults(func=_cmd_replicate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PcekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
