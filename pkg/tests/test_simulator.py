import json

import numpy as np
import pytest

from pcekit.core import JOINT_LABELS, StratumLabel, TreatmentSequence
from pcekit.errors import ConfigError
from pcekit.simulator import (
    MIN_ORACLE_N,
    DgpConfig,
    generate_trial,
    scenario,
    scenario_names,
    true_pce,
)


@pytest.mark.parametrize(
    "kwargs, text",
    [
        (dict(n_subjects=1), "at least 2"),
        (dict(n_subjects=10, sigma_x=0.0), "sigma_x"),
        (dict(n_subjects=10, sigma=(1.0, 0.0)), "noise scales"),
        (dict(n_subjects=10, eta=(0.0, 0.0, 0.0)), "pair"),
        (dict(n_subjects=10, missing_y_prob=(1.0, 0.0)), "missing_y_prob"),
        (dict(n_subjects=10, missing_y_prob=(-0.1, 0.0)), "missing_y_prob"),
        (dict(n_subjects=10, rho_within=1.5), "rho_within"),
        (dict(n_subjects=10, covariate_name="base"), "x_ column prefix"),
        (dict(n_subjects=10, rho_within=0.8, rho_cross=0.8), "semidefinite"),
    ],
)
def test_config_rejects_bad_knobs(kwargs, text):
    with pytest.raises(ConfigError, match=text):
        DgpConfig(**kwargs)


def test_correlation_matrix_layout():
    cfg = DgpConfig(n_subjects=10, rho_within=0.2, rho_cross=0.3, rho_strata=0.4)
    expected = np.array(
        [
            [1.0, 0.4, 0.2, 0.3],
            [0.4, 1.0, 0.3, 0.2],
            [0.2, 0.3, 1.0, 0.0],
            [0.3, 0.2, 0.0, 1.0],
        ]
    )
    assert np.array_equal(cfg.correlation_matrix(), expected)


def test_generate_trial_is_deterministic():
    cfg = scenario("paper_like", n_subjects=40, seed=123)
    assert generate_trial(cfg) == generate_trial(cfg)
    other = scenario("paper_like", n_subjects=40, seed=124)
    assert generate_trial(cfg) != generate_trial(other)


def test_sequence_split_and_ids():
    records = generate_trial(DgpConfig(n_subjects=11, seed=5))
    ef = sum(r.sequence is TreatmentSequence.EXPERIMENTAL_FIRST for r in records)
    assert ef == 6  # odd n rounds the experimental-first group up
    assert [r.subject_id for r in records][:2] == ["s01", "s02"]
    assert records[-1].subject_id == "s11"
    assert all(r.covariate_names == ("x_base",) for r in records)


def test_carryover_and_period_shift_arithmetic():
    base = DgpConfig(n_subjects=60, seed=9, gamma=(1.0, 3.0), sigma=(2.0, 2.0))
    shifted = DgpConfig(
        n_subjects=60, seed=9, gamma=(1.0, 3.0), sigma=(2.0, 2.0),
        pi_period=5.0, lambda_carry=0.5,
    )
    plain = {r.subject_id: r for r in generate_trial(base)}
    for rec in generate_trial(shifted):
        ref = plain[rec.subject_id]
        assert rec.sequence == ref.sequence
        assert rec.y_p1 == ref.y_p1
        assert rec.y_p2 == (ref.y_p2 + 5.0) + 0.5 * ref.y_p1


def test_missingness_is_per_arm():
    cfg = DgpConfig(n_subjects=400, seed=3, missing_y_prob=(0.9, 0.0))
    records = generate_trial(cfg)
    assert all(r.y_for_arm(1) is not None for r in records)
    missing0 = sum(r.y_for_arm(0) is None for r in records)
    assert 0.8 < missing0 / 400 < 0.97
    # masking never touches adherence
    assert all(r.a_p1 in (0, 1) and r.a_p2 in (0, 1) for r in records)


def test_true_pce_table_shape_and_consistency():
    cfg = scenario("paper_like", seed=2)
    truth = true_pce(cfg, oracle_n=20_000)
    assert truth.oracle_n == 20_000
    assert truth.seed == 2
    assert [r.stratum for r in truth.rows] == list(JOINT_LABELS)
    assert sum(r.probability for r in truth.rows) == pytest.approx(1.0, abs=1e-12)
    assert sum(r.n_members for r in truth.rows) == 20_000
    for r in truth.rows:
        assert r.prob_mc_se > 0.0
        assert r.pce_mc_se > 0.0
        assert r.pce == pytest.approx(r.mu1 - r.mu0, abs=1e-9)
    assert true_pce(cfg, oracle_n=20_000) == truth


def test_true_pce_guards():
    cfg = scenario("paper_like", seed=2)
    with pytest.raises(ConfigError, match=str(MIN_ORACLE_N)):
        true_pce(cfg, oracle_n=MIN_ORACLE_N - 1)
    # perfect monotonicity leaves S10 with no oracle members at all
    with pytest.raises(ConfigError, match="oracle members"):
        true_pce(scenario("monotone", seed=0), oracle_n=MIN_ORACLE_N)


def test_truth_table_access_and_files(tmp_path):
    truth = true_pce(DgpConfig(n_subjects=10, seed=1, gamma=(0.0, 1.0)), MIN_ORACLE_N)
    assert truth.row(StratumLabel(1, 0)).stratum == StratumLabel(1, 0)
    with pytest.raises(KeyError):
        truth.row(StratumLabel(None, 1))

    jpath = tmp_path / "truth.json"
    truth.write_json(jpath)
    loaded = json.loads(jpath.read_text())
    assert loaded["oracle_n"] == MIN_ORACLE_N
    assert set(loaded["strata"]) == {"S00", "S01", "S10", "S11"}
    assert loaded["strata"]["S11"]["pce"] == truth.row(StratumLabel(1, 1)).pce

    cpath = tmp_path / "truth.csv"
    truth.write_csv(cpath)
    lines = cpath.read_text().strip().split("\n")
    assert lines[0].startswith("stratum,probability")
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "S00"
    assert float(first[1]) == truth.row(StratumLabel(0, 0)).probability


def test_scenario_catalogue():
    assert scenario_names() == (
        "a3p_violated",
        "a3pp_violated",
        "a4p_violated",
        "carryover_heavy",
        "monotone",
        "paper_like",
    )
    cfg = scenario("paper_like")
    assert cfg.n_subjects == 163
    over = scenario("paper_like", n_subjects=50, seed=7)
    assert (over.n_subjects, over.seed) == (50, 7)
    assert (over.eta, over.gamma, over.rho_within) == (cfg.eta, cfg.gamma, cfg.rho_within)
    with pytest.raises(ConfigError, match="unknown scenario"):
        scenario("nope")


def test_config_dict_round_trip():
    cfg = scenario("a4p_violated", n_subjects=77, seed=13)
    d = cfg.to_dict()
    assert d["eta"] == [0.757, 0.95]
    assert DgpConfig.from_dict(d) == cfg
    with pytest.raises(ConfigError, match="unknown config key"):
        DgpConfig.from_dict({**d, "bogus": 1})
