import json
import math

import numpy as np
import pytest

from exchwalk.experiments import (
    ConcentrationConfig,
    ConfigError,
    PersistenceConfig,
    VelocityConfig,
    concentration_tail,
    goodsite_persistence,
    parse_experiment_config,
    velocity_sweep,
)
from exchwalk.results import result_csv_text, result_json_text

MU_DRIFT = {
    "atoms": [
        {"probs": [0.1, 0.9], "weight": 0.8},
        {"probs": [0.9, 0.1], "weight": 0.2},
    ]
}
MU_BALANCED = {
    "atoms": [
        {"probs": [0.1, 0.9], "weight": 0.5},
        {"probs": [0.9, 0.1], "weight": 0.5},
    ]
}
MU_POINT = {"atoms": [{"probs": [0.0, 1.0], "weight": 1.0}]}


def stats_of(result, **labels):
    out = {}
    for cell in result.cells:
        if cell.labels == labels:
            for st in cell.stats:
                out[st.statistic] = st
    return out


# --- config parsing -----------------------------------------------------------


def test_parse_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_experiment_config(
            {"kind": "velocity", "d": 1, "mu": MU_DRIFT, "T": 10, "replicas": 2,
             "gammas": [1.0], "bogus": 1}
        )


def test_parse_rejects_missing_keys():
    with pytest.raises(ConfigError, match="missing"):
        parse_experiment_config({"kind": "velocity", "d": 1, "mu": MU_DRIFT})


def test_parse_rejects_unknown_kind():
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        parse_experiment_config({"kind": "wat"})


def test_velocity_rejects_zero_drift():
    cfg = VelocityConfig(d=1, mu=MU_BALANCED, T=10, replicas=2, gammas=(1.0,))
    with pytest.raises(ConfigError, match="drift"):
        cfg.validate()


def test_persistence_enforces_mixing_precondition():
    cfg = PersistenceConfig(
        d=1, mu=MU_BALANCED, gamma=1.0, t=1.0, L=8, J_grid=(4,), replicas=2
    )
    with pytest.raises(ConfigError, match="exceed"):
        cfg.validate()


def test_persistence_enforces_j_below_l():
    cfg = PersistenceConfig(
        d=1, mu=MU_BALANCED, gamma=600.0, t=1.0, L=8, J_grid=(8,), replicas=2
    )
    with pytest.raises(ConfigError, match="J < L"):
        cfg.validate()


# --- velocity -------------------------------------------------------------------


def test_velocity_point_mass_zero_variance():
    cfg = VelocityConfig(
        d=1, mu=MU_POINT, T=20, replicas=4, gammas=(1.0,), seed=1, driver="lazy"
    )
    res = velocity_sweep(cfg)
    cell = stats_of(res, gamma=1.0)
    assert cell["dist_mean"].value == 0.0
    assert cell["dist_sd"].value == 0.0
    assert cell["proj_mean"].value == pytest.approx(1.0)
    assert cell["in_ball_freq"].value == 1.0


def test_velocity_infinite_cell_matches_drift():
    cfg = VelocityConfig(
        d=1, mu=MU_DRIFT, T=4000, replicas=24, gammas=(), include_infinite=True, seed=3
    )
    res = velocity_sweep(cfg)
    cell = stats_of(res, gamma=math.inf)
    se = cell["proj_sd"].value / math.sqrt(24)
    assert abs(cell["proj_mean"].value - 0.48) <= 4 * se


def test_velocity_deterministic_output():
    cfg = VelocityConfig(
        d=1, mu=MU_DRIFT, T=40, replicas=6, gammas=(1.0, 3.0), seed=17, driver="lazy"
    )
    a, b = velocity_sweep(cfg), velocity_sweep(cfg)
    assert result_csv_text(a) == result_csv_text(b)
    assert result_json_text(a) == result_json_text(b)


def test_velocity_worker_count_does_not_change_bytes():
    base = dict(d=1, mu=MU_DRIFT, T=30, replicas=6, gammas=(1.0,), seed=8, driver="lazy")
    a = velocity_sweep(VelocityConfig(**base, workers=0))
    b = velocity_sweep(VelocityConfig(**base, workers=2))
    assert result_csv_text(a) == result_csv_text(b)


def test_velocity_csv_shape():
    cfg = VelocityConfig(d=1, mu=MU_POINT, T=5, replicas=2, gammas=(1.0,), seed=0)
    text = result_csv_text(velocity_sweep(cfg))
    lines = text.splitlines()
    assert lines[0].startswith("# exchwalk-results schema_version=1 kind=velocity")
    assert lines[1] == "gamma,L,a,J,t,statistic,value,ci_lo,ci_hi,n"
    assert any("annealed_drift_proj" in ln for ln in lines)


# --- concentration ------------------------------------------------------------------


@pytest.fixture(scope="module")
def concentration_result():
    cfg = ConcentrationConfig(
        d=1,
        mu=MU_BALANCED,
        gamma=4.0,
        t=1.0,
        radii=(4, 8),
        thresholds=(0.0, 0.1, 0.2, 1.01),
        replicas=800,
        seed=5,
    )
    return concentration_tail(cfg)


def test_concentration_trivial_thresholds(concentration_result):
    for L in (4, 8):
        cell0 = stats_of(concentration_result, L=L, a=0.0, t=1.0, gamma=4.0)
        assert cell0["exceed_freq"].value == 1.0
        cell_big = stats_of(concentration_result, L=L, a=1.01, t=1.0, gamma=4.0)
        assert cell_big["exceed_freq"].value == 0.0
        assert "exceed_upper99" in cell_big


def test_concentration_monotone_in_threshold(concentration_result):
    for L in (4, 8):
        freqs = [
            stats_of(concentration_result, L=L, a=a, t=1.0, gamma=4.0)["exceed_freq"].value
            for a in (0.0, 0.1, 0.2, 1.01)
        ]
        assert all(x >= y for x, y in zip(freqs, freqs[1:]))


def test_concentration_fit_positive(concentration_result):
    fit = stats_of(concentration_result, gamma=4.0, t=1.0)
    assert fit["fitted_c"].value > 0


def test_concentration_deterministic(concentration_result):
    cfg = ConcentrationConfig(
        d=1, mu=MU_BALANCED, gamma=4.0, t=1.0, radii=(4, 8),
        thresholds=(0.0, 0.1, 0.2, 1.01), replicas=800, seed=5,
    )
    again = concentration_tail(cfg)
    assert result_csv_text(again) == result_csv_text(concentration_result)


# --- persistence -----------------------------------------------------------------------


def test_persistence_single_type_never_bad():
    cfg = PersistenceConfig(
        d=1, mu=MU_POINT, gamma=600.0, t=1.0, L=8, J_grid=(2, 4), replicas=40, seed=2,
        resolution=3,
    )
    res = goodsite_persistence(cfg)
    for J in (2, 4):
        cell = stats_of(res, J=J, gamma=600.0, t=1.0, L=8)
        assert cell["bad_freq"].value == 0.0


def test_persistence_runs_and_reports(tmp_path):
    cfg = PersistenceConfig(
        d=1, mu=MU_BALANCED, gamma=600.0, t=1.0, L=8, J_grid=(2, 4), replicas=50,
        seed=3, resolution=2,
    )
    res = goodsite_persistence(cfg)
    head = stats_of(res, gamma=600.0, t=1.0, L=8)
    assert head["rejection_infeasible"].value == 0.0
    assert head["rejection_attempts_mean"].value >= 1.0
    for J in (2, 4):
        cell = stats_of(res, J=J, gamma=600.0, t=1.0, L=8)
        assert 0.0 <= cell["bad_freq"].value <= 1.0
    text = result_json_text(res)
    doc = json.loads(text)
    assert doc["schema_version"] == 1 and doc["kind"] == "persistence"
