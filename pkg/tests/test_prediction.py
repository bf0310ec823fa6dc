import dataclasses

import numpy as np
import pytest

from jointfuse.baselines import kriging_align
from jointfuse.inference import conditional_posterior, sample_posterior
from jointfuse.joint import build_joint_model
from jointfuse.mesh import TriangleMesh
from jointfuse.model import FIXED
from jointfuse.prediction import (PredictionGrid, backtransform, eta_draws, predict_eta3,
                                  predictive_samples, read_ascii_grid, write_ascii_grid,
                                  write_prediction_csv)


def test_zero_latent_gives_intercept_plus_sitetype(small_joint, small):
    _, _, sim = small
    spec = small_joint.spec
    rows = sim.monitors.subset(np.arange(12))
    lp = spec.predictor("monitors", rows)
    theta = np.zeros(spec.n_latent)
    fx = spec.latent_slice(FIXED)
    names = spec.component(FIXED).names
    beta = np.arange(1.0, len(names) + 1)
    theta[fx] = beta
    eff = dict(zip(names, beta))
    out = lp.evaluate(theta, small_joint.hypers_at(0))
    expect = np.array([eff["alpha_mon"] + eff.get(f"beta_{s}", 0.0) for s in rows.sitetype])
    assert np.array_equal(out, expect)


def test_grid_cell_at_monitor_matches_posterior_mean(small_joint, small):
    _, _, sim = small
    i = 3
    m = sim.monitors.subset([i])
    grid = PredictionGrid(m.x[0] - 0.5, m.y[0] - 0.5, 1.0, 1, 1, (int(m.time[0]),), m.sitetype)
    n = 1000
    pred = predict_eta3(small_joint, grid, n_samples=n, seed=4)
    exact = kriging_align(small_joint, "monitors", m)[0]
    se = pred.sd[0, 0] / np.sqrt(n)
    assert abs(pred.mean[0, 0] - exact) < 3 * se


def test_sitetype_contrast_at_colocated_cells(small_joint, small):
    _, _, sim = small
    spec = small_joint.spec
    day = int(sim.monitors.time[0])
    grid = PredictionGrid(40.0, 40.0, 2.0, 2, 1, (day,), np.array(["RUR", "URB"]))
    # collapse both cells onto one location
    grid = dataclasses.replace(grid, resolution=1e-9)
    n = 1000
    pred = predict_eta3(small_joint, grid, n_samples=n, seed=2)
    draws = sample_posterior(small_joint, n, 2)
    T = spec.component("z3").n
    t = day - spec.meta["calendar"][0]
    z3 = spec.latent_slice("z3")
    th = draws.theta
    diff = (th[:, spec.fixed_index("beta_URB")] + th[:, z3.start + T + t] - th[:, z3.start + t])
    expect = small_joint.latent_mean()
    e_diff = (expect[spec.fixed_index("beta_URB")] + expect[z3.start + T + t]
              - expect[z3.start + t])
    got = pred.mean[0, 1] - pred.mean[0, 0]
    assert got == pytest.approx(diff.mean(), abs=1e-10)
    assert abs(got - e_diff) < 3 * diff.std() / np.sqrt(n)


def test_predictive_law_of_total_variance(small_joint, small):
    _, _, sim = small
    rows = sim.monitors.subset([0, 5])
    n_eta, n_y = 50, 100
    ps = predictive_samples(small_joint, rows, n_eta=n_eta, n_y=n_y, seed=9)
    eta, draws = eta_draws(small_joint, rows, n_eta, 9)
    noise = np.exp([h["eps_mon.log_var"] for h in draws.hypers])
    for i in range(len(rows)):
        target = eta[:, i].var() + noise.mean()
        assert ps.draws[i].var() == pytest.approx(target, rel=0.05)


def test_predictive_samples_deterministic_and_order_free(small_joint, small):
    _, _, sim = small
    rows = sim.monitors.subset(np.arange(6))
    a = predictive_samples(small_joint, rows, n_eta=10, n_y=5, seed=1)
    b = predictive_samples(small_joint, rows, n_eta=10, n_y=5, seed=1)
    assert np.array_equal(a.draws, b.draws)
    rev = predictive_samples(small_joint, rows.subset(np.arange(6)[::-1]), n_eta=10, n_y=5, seed=1)
    assert np.array_equal(rev.draws[::-1], a.draws)
    c = predictive_samples(small_joint, rows, n_eta=10, n_y=5, seed=2)
    assert not np.array_equal(a.draws, c.draws)


def test_translation_invariance(small):
    geom, mesh, sim = small
    shift = np.array([123.4, -56.7])
    moved = TriangleMesh(mesh.nodes + shift, mesh.triangles, mesh.boundary + shift)

    def mv(b):
        return dataclasses.replace(b, x=b.x + shift[0], y=b.y + shift[1])
    spec_a = build_joint_model(mesh, sim.pcm, sim.aqum, sim.monitors)
    spec_b = build_joint_model(moved, mv(sim.pcm), mv(sim.aqum), mv(sim.monitors))
    psi = spec_a.psi_init
    pa, _ = conditional_posterior(spec_a, psi)
    pb, _ = conditional_posterior(spec_b, psi)
    grid = PredictionGrid.regular((10, 10, 90, 90), 10.0, days=(0,))
    rows_a = grid.rows(0)
    rows_b = mv(rows_a)
    h = spec_a.hyper_values(psi)
    ea = spec_a.predictor("monitors", rows_a).evaluate(pa.mean, h)
    eb = spec_b.predictor("monitors", rows_b).evaluate(pb.mean, h)
    assert np.max(np.abs(ea - eb)) < 1e-10


def test_backtransform():
    assert np.array_equal(backtransform(np.zeros(5), "concentration"), np.ones(5))
    rng = np.random.default_rng(0)
    d = rng.normal(size=2000)
    q = [0.025, 0.5, 0.975]
    assert np.allclose(np.quantile(backtransform(d, "concentration"), q, method="inverted_cdf"),
                       np.exp(np.quantile(d, q, method="inverted_cdf")), atol=1e-12)
    assert np.exp(d).mean() >= np.exp(d.mean())
    assert np.array_equal(backtransform(d, "log"), d)
    with pytest.raises(ValueError):
        backtransform(d, "ppb")


def test_grid_construction():
    g = PredictionGrid.regular((0, 0, 10, 6), 2.0, days=(1, 2))
    assert (g.nx, g.ny) == (5, 3)
    c = g.centres
    assert np.allclose(c[0], [1, 1]) and np.allclose(c[-1], [9, 5])
    with pytest.raises(ValueError):
        PredictionGrid.regular((0, 0, 1, 1), 5.0)
    with pytest.raises(ValueError):
        PredictionGrid.regular((0, 0, 4, 4), 2.0, sitetype="SUB")


def test_ascii_grid_round_trip(tmp_path):
    g = PredictionGrid.regular((5, 10, 15, 16), 2.0)
    vals = np.arange(g.nx * g.ny, dtype=float) / 7
    vals[3] = np.nan
    p = tmp_path / "g.asc"
    write_ascii_grid(p, vals, g)
    header, back = read_ascii_grid(p)
    assert header["ncols"] == 5 and header["nrows"] == 3
    assert header["xllcorner"] == 5 and header["cellsize"] == 2
    assert np.isnan(back.ravel()[3])
    ok = ~np.isnan(vals)
    assert np.allclose(back.ravel()[ok], vals[ok], rtol=1e-9)
    # first data line holds the northern row
    first = p.read_text().splitlines()[6].split()
    assert float(first[0]) == pytest.approx(vals.reshape(3, 5)[-1, 0])


def test_predict_eta3_outputs(small_joint, tmp_path):
    g = PredictionGrid.regular((20, 20, 80, 80), 20.0, days=(0, 1))
    pred = predict_eta3(small_joint, g, n_samples=50, seed=0)
    assert pred.mean.shape == (2, 9)
    assert np.all(pred.q025 <= pred.mean) and np.all(pred.mean <= pred.q975)
    conc = predict_eta3(small_joint, g, n_samples=50, seed=0, scale="concentration")
    # interpolated quantiles of exp(draws) lie above exp of interpolated log quantiles
    assert np.all(conc.q975 >= np.exp(pred.q975) - 1e-12)
    assert np.allclose(conc.q975, np.exp(pred.q975), rtol=1e-3)
    assert np.all(conc.mean >= np.exp(pred.mean))
    write_prediction_csv(tmp_path / "p.csv", pred, g)
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 1 + 2 * 9
