import itertools

import numpy as np
import pytest

import otsmc


def test_ot_matches_best_permutation():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 2))
    cost = otsmc.cost_matrix(x)
    u = np.full(5, 0.2)
    plan = otsmc.solve_ot(cost, u, u)
    best = min(sum(cost[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5))) / 5
    assert plan["objective"] == pytest.approx(best, abs=1e-12)
    dense = plan["dense"]
    assert np.allclose(dense.sum(axis=1), u) and np.allclose(dense.sum(axis=0), u)
    f, g = plan["row_potentials"], plan["col_potentials"]
    assert np.all(f[:, None] + g[None, :] <= cost + 1e-9)


def test_marginal_mismatch_is_a_value_error():
    cost = np.zeros((2, 2))
    with pytest.raises(ValueError):
        otsmc.solve_ot(cost, np.array([0.5, 0.5]), np.array([0.9, 0.3]))


def test_ensemble_transform_preserves_the_reweighted_mean():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 3))
    beta = rng.exponential(size=40)
    beta /= beta.sum()
    y = otsmc.ensemble_transform(x, beta)
    assert np.allclose(y.mean(axis=0), beta @ x, atol=1e-12)


def test_ess_and_tempering():
    assert otsmc.ess(np.zeros(10)) == 1.0
    v = np.random.default_rng(2).normal(scale=30.0, size=200)
    assert otsmc.tempered_ess(v, 0.0) == 1.0
    tau = otsmc.next_temperature(0.0, v, 0.5)
    assert 0.0 < tau < 1.0
    assert otsmc.tempered_ess(v, tau) == pytest.approx(0.5, abs=1e-6)


def test_resample_counts():
    idx = otsmc.resample(np.array([0.5, 0.25, 0.25, 0.0]), "systematic", 3)
    assert len(idx) == 4 and 3 not in idx


def test_set_run_on_the_toy_target():
    toy = otsmc.GaussianToy(dim=2)
    moments = toy.exact_moments()
    out = otsmc.run(toy, method="set", particles=256, mutations=2, seed=4)
    assert out["temperatures"][-1] == 1.0
    assert out["positions"].shape == (256, 2)
    r = otsmc.variance_ratio(out["positions"], moments["mean"], moments["diag_variance"])
    assert 0.5 < r < 1.5
    again = otsmc.run(toy, method="set", particles=256, mutations=2, seed=4, threads=2)
    assert np.array_equal(out["positions"], again["positions"])


def test_elliptic_model_and_oracle():
    model = otsmc.EllipticInverse(grid=5)
    assert model.dimension == 25
    w = model.solve_forward(np.zeros(25))
    assert 0.1 * model.robin_boundary_integral(w) == pytest.approx(1.0, abs=1e-8)
    assert model.forward_map(model.truth).shape == model.observations.shape
    ref = otsmc.mcmc_reference(model, length=10000, seed=2)
    assert ref["provenance"] == "mcmc" and ref["mean"].shape == (25,)
    smc = otsmc.run(model, method="smc", particles=64, mutations=1)
    assert smc["forward_solves"] > 64
