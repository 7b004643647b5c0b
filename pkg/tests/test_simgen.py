import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from obliqforest.coxscore import newton_raphson_fit
from obliqforest.simgen import (
    CLASSES, SimConfig, build_effect_matrix, gen_correlation_matrix, gen_predictors,
    gen_survival, nonlinear_map, simulate, write_sim,
)
from obliqforest.survdata import load_csv


def test_zero_correlation_is_identity(rng):
    np.testing.assert_array_equal(gen_correlation_matrix(7, 0.0, rng), np.eye(7))


def test_correlation_bound_over_seeds():
    worst = 0.0
    for seed in range(100):
        C = gen_correlation_matrix(10, 0.3, np.random.default_rng(seed))
        assert np.linalg.eigvalsh(C).min() >= -1e-10
        np.testing.assert_allclose(np.diag(C), 1.0)
        np.testing.assert_array_equal(C, C.T)
        worst = max(worst, np.abs(C - np.eye(10)).max())
    assert worst <= 0.32


def test_correlation_rejects_one(rng):
    with pytest.raises(ValueError):
        gen_correlation_matrix(3, 1.0, rng)


def test_predictor_moments(rng):
    X = gen_predictors(100_000, np.eye(3), rng)
    assert np.all(np.abs(X.mean(0)) < 0.02)
    assert np.all((X.std(0) > 0.98) & (X.std(0) < 1.02))
    C = np.eye(3)
    C[0, 1] = C[1, 0] = 0.3
    X = gen_predictors(100_000, C, rng)
    assert abs(np.corrcoef(X[:, 0], X[:, 1])[0, 1] - 0.3) < 0.02
    one = gen_predictors(1, C, rng)
    assert one.shape == (1, 3) and np.isfinite(one).all()


def test_non_psd_rejected(rng):
    bad = np.array([[1.0, 0.99, -0.99], [0.99, 1.0, 0.99], [-0.99, 0.99, 1.0]])
    with pytest.raises(np.linalg.LinAlgError):
        gen_predictors(5, bad, rng)


def test_nonlinear_map_is_centered_square():
    x = np.linspace(-3, 3, 601)
    g = nonlinear_map(x)
    d = np.diff(g)
    assert (d > 0).any() and (d < 0).any()
    np.testing.assert_allclose(g, x**2 - 1.0)
    z = np.random.default_rng(0).normal(size=200_000)
    assert abs(nonlinear_map(z).mean()) < 0.02


def test_effect_matrix_structure(rng):
    cfg = SimConfig(n=2500)
    X = rng.normal(size=(2500, 75))
    effects, labels, classes, rel, coefs, partners = build_effect_matrix(X, cfg)
    beta = math.log(1.64)
    assert coefs[:15].tolist() == [0.0] * 15
    assert all(c == 0 for lab, c in zip(labels, coefs) if lab.startswith(("irr_", "comb_")))
    nz = coefs[coefs != 0]
    np.testing.assert_allclose(nz, beta)
    assert nz[0] == pytest.approx(0.4947, abs=1e-4)
    assert len(nz) == 15 + 15 + 5 + 15
    combos = [i for i, lab in enumerate(labels) if lab.startswith("mean(")]
    assert len(combos) == 5
    for i in combos:
        assert abs(effects[:, i].var() - 1) < 0.05
    assert classes == tuple(c for c in CLASSES for _ in range(15))
    assert rel.tolist() == [0] * 15 + [1] * 60
    targets = set(partners.values())
    assert any(t.startswith("main_") for t in targets)
    assert any(t.startswith("g(nlin_") for t in targets)
    assert any(t.startswith("mean(") for t in targets)


def test_effect_matrix_needs_columns(rng):
    with pytest.raises(ValueError, match="need at least 75"):
        build_effect_matrix(rng.normal(size=(10, 70)), SimConfig())


def test_uneven_combination_groups(rng):
    cfg = SimConfig(n_per_class=4)
    effects, labels, *_ = build_effect_matrix(rng.normal(size=(50, 20)), cfg)
    assert [lab for lab in labels if lab.startswith("mean(")] == [
        "mean(comb_1,comb_2,comb_3)", "mean(comb_4)"]


def test_zero_effects_hit_target_censoring(rng):
    t, s = gen_survival(np.zeros((2500, 3)), np.zeros(3), 0.45, rng)
    assert 0.43 <= 1 - s.mean() <= 0.47
    assert np.all(t > 0)


def test_single_effect_is_recoverable(rng):
    x = rng.normal(size=(4000, 1))
    t, s = gen_survival(x, [math.log(1.64)], 0.45, rng)
    fit = newton_raphson_fit(x, t, s)
    assert abs(fit.beta[0] - math.log(1.64)) < 3 * fit.std_err[0]


def test_survival_guards(rng):
    with pytest.raises(ValueError):
        gen_survival(np.zeros((5, 1)), [0.0], 0.005, rng)
    with pytest.raises(ValueError):
        gen_survival(np.zeros((5, 1)), [np.inf], 0.45, rng)
    with pytest.raises(ValueError):
        SimConfig(target_censoring=0.0).validate()
    with pytest.raises(ValueError):
        SimConfig(n_per_class=0).validate()


@given(st.integers(0, 2**31), st.sampled_from([0.2, 0.45, 0.7]), st.sampled_from([0.0, 0.15, 0.3]))
def test_censoring_calibration_property(seed, target, corr):
    sim = simulate(SimConfig(n=1000, n_per_class=2, max_corr=corr, target_censoring=target,
                             seed=seed))
    assert abs((1 - sim.ds.status.mean()) - target) <= 0.05


def test_simulate_is_seeded_and_hides_effects():
    a = simulate(SimConfig(n=200, seed=4))
    b = simulate(SimConfig(n=200, seed=4))
    for f in ("X", "time", "status"):
        np.testing.assert_array_equal(getattr(a.ds, f), getattr(b.ds, f))
    assert a.ds.p == 75
    assert not any("(" in c for c in a.ds.col_names)
    assert a.relevance.sum() == 60
    assert a.class_mask("nonlinear").sum() == 15
    c = simulate(SimConfig(n=200, seed=5))
    assert not np.array_equal(a.ds.time, c.ds.time)


def test_write_sim(tmp_path):
    sim = simulate(SimConfig(n=50, n_per_class=2, seed=1))
    write_sim(sim, tmp_path / "d.csv", tmp_path / "r.csv", comment="config: {}")
    ds = load_csv(tmp_path / "d.csv", "time", "status")
    np.testing.assert_array_equal(ds.X, sim.ds.X)
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert [r["name"] for r in rows] == list(sim.ds.col_names)
    assert [int(r["relevance"]) for r in rows] == sim.relevance.tolist()
    assert rows[-1]["partner"]
