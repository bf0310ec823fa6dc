import dataclasses

import numpy as np
import pytest

from jointfuse.inference import conditional_posterior, evaluate
from jointfuse.latent import params_from_range_sigma, matern_cov
from jointfuse.synthetic import (DENSE_CAP, JointTruth, default_geometry, default_mesh,
                                 dense_oracle_posterior, sample_spde, simulate_joint,
                                 synthetic_roads_and_landcover)
from jointfuse.sitetype import classify

from helpers import scalar_spec, linear_spec, random_instance


def test_default_geometry_layout():
    g = default_geometry(0)
    assert g.pcm_cells.shape == (400, 2) and g.aqum_cells.shape == (25, 2)
    assert len(g.monitors) == 40
    assert (g.sitetypes == "RUR").sum() == 10
    assert set(g.sitetypes[:30]) == {"URB", "RKS"}
    assert np.all((g.monitors > 0) & (g.monitors < 100))


def test_zero_noise_composition():
    geom = default_geometry(1, n_pcm=6, n_aqum=3, n_urban=4, n_rural=2)
    # put the monitors on PCM cell centres
    geom = dataclasses.replace(geom, monitors=geom.pcm_cells[[0, 8, 15, 20, 27, 33]])
    mesh = default_mesh(geom, 25.0, 40.0)
    truth = JointTruth(var_eps_pcm=0.0, var_eps_aqum=0.0, var_eps_mon=0.0,
                       lambda_12=1.0, lambda_13=1.0, lambda_23=1.0)
    sim = simulate_joint(truth, mesh, geom, n_days=4, n_years=2, seed=3)
    z2, z3 = sim.latent["z2"], sim.latent["z3"]
    beta = {"RUR": 0.0, "URB": truth.beta_URB, "RKS": truth.beta_RKS}
    code = {"RUR": 0, "URB": 1, "RKS": 2}
    for i in range(len(sim.monitors)):
        m = sim.monitors.subset([i])
        sel = (sim.pcm.x == m.x[0]) & (sim.pcm.y == m.y[0])
        y1 = sim.pcm.values[sel][0]
        d = int(m.time[0])
        s = m.sitetype[0]
        expect = (truth.alpha_mon - truth.alpha_pcm) + beta[s] + z2[d] + z3[code[s], d]
        assert m.values[0] - y1 == pytest.approx(expect, abs=1e-12)


def test_block_variances_match_noise():
    geom = default_geometry(2, n_pcm=20, n_aqum=10, n_urban=30, n_rural=10)
    mesh = default_mesh(geom, 25.0, 40.0)
    tiny = 1e-12
    truth = JointTruth(var_eps_pcm=0.5, var_eps_aqum=0.3, var_eps_mon=0.4, z1_sigma=tiny,
                       z2_var=tiny, z3_var=tiny)
    sim = simulate_joint(truth, mesh, geom, n_days=100, n_years=10, seed=4)
    assert np.var(sim.pcm.values, ddof=1) == pytest.approx(0.5, rel=0.05)
    assert np.var(sim.aqum.values, ddof=1) == pytest.approx(0.3, rel=0.05)
    resid = sim.monitors.values.copy()
    for s in ("RUR", "URB", "RKS"):
        sel = sim.monitors.sitetype == s
        resid[sel] -= resid[sel].mean()
    assert np.var(resid, ddof=3) == pytest.approx(0.4, rel=0.05)


def test_simulation_deterministic(small):
    geom, mesh, sim = small
    again = simulate_joint(JointTruth(), mesh, geom, n_days=5, n_years=2, seed=0)
    for b in ("pcm", "aqum", "monitors"):
        assert np.array_equal(getattr(sim, b).values, getattr(again, b).values)
    other = simulate_joint(JointTruth(), mesh, geom, n_days=5, n_years=2, seed=1)
    assert not np.array_equal(sim.monitors.values, other.monitors.values)
    assert np.array_equal(default_geometry(5).monitors, default_geometry(5).monitors)


def test_spde_variogram_matches_matern():
    geom = default_geometry(0)
    mesh = default_mesh(geom, 4.0, 20.0)
    rho, sigma = 35.0, 0.6
    nodes = mesh.nodes
    inner = np.all((nodes > 25) & (nodes < 75), axis=1)
    idx = np.flatnonzero(inner)
    d = np.sqrt(((nodes[idx, None] - nodes[None, idx]) ** 2).sum(-1))
    i, j = np.nonzero(np.abs(d - rho / 2) < 1.0)
    rng = np.random.default_rng(11)
    gam = []
    for _ in range(50):
        z = sample_spde(mesh, sigma, rho, rng)
        gam.append(0.5 * np.mean((z[idx[i]] - z[idx[j]]) ** 2))
    _, log_kappa = params_from_range_sigma(rho, sigma)
    theory = sigma ** 2 - matern_cov(rho / 2, sigma, np.exp(log_kappa))
    assert np.mean(gam) == pytest.approx(theory, rel=0.2)


def test_dense_oracle_scalar_conjugate():
    y, q, v = 1.7, 2.0, 0.5
    spec = scalar_spec(y, q, np.log(v))
    o = dense_oracle_posterior(spec, spec.psi_init)
    assert o.mean[0] == pytest.approx(y / v / (q + 1 / v), abs=1e-12)
    assert o.cov[0, 0] == pytest.approx(1 / (q + 1 / v), abs=1e-12)
    s2 = 1 / q + v
    assert o.log_evidence == pytest.approx(-0.5 * np.log(2 * np.pi * s2) - 0.5 * y ** 2 / s2,
                                           abs=1e-12)


def test_dense_oracle_matches_sparse_and_is_order_free(rng):
    Q, A, y = random_instance(rng, n=40, m=60, density=0.1)
    spec = linear_spec(Q, A, y, log_v=-0.5)
    psi = spec.psi_init
    o = dense_oracle_posterior(spec, psi)
    post, _ = conditional_posterior(spec, psi)
    assert np.max(np.abs(o.mean - post.mean)) < 1e-8
    ev = evaluate(spec, psi)
    # the sparse evidence drops nothing for a proper prior
    assert ev.log_evidence == pytest.approx(o.log_evidence, abs=1e-8)
    perm = rng.permutation(len(y))
    Ap = A[perm]
    op = dense_oracle_posterior(linear_spec(Q, Ap, y[perm], log_v=-0.5), psi)
    assert op.log_evidence == pytest.approx(o.log_evidence, abs=1e-10)


def test_dense_oracle_cap(small):
    from jointfuse.joint import build_joint_model
    _, mesh, sim = small
    spec = build_joint_model(mesh, sim.pcm, sim.aqum, sim.monitors)
    assert spec.n_latent <= DENSE_CAP
    geom = default_geometry(0)
    big = default_mesh(geom, 4.0, 20.0)
    big_sim = simulate_joint(JointTruth(), big, geom, n_days=3, seed=0)
    big_spec = build_joint_model(big, big_sim.pcm, big_sim.aqum, big_sim.monitors)
    with pytest.raises(ValueError):
        dense_oracle_posterior(big_spec, big_spec.psi_init)


def test_synthetic_roads_reproduce_monitor_types():
    geom = default_geometry(0)
    roads, lc = synthetic_roads_and_landcover(geom, seed=0)
    pts = geom.monitors * 1000.0
    got = classify(pts, roads, lc, "R3")
    # every roadside monitor sits within the R3 distance of its road
    assert np.all(got[geom.sitetypes == "RKS"] == "RKS")
    again = synthetic_roads_and_landcover(geom, seed=0)[0]
    assert all(np.array_equal(a, b) for a, b in zip(roads.lines, again.lines))
