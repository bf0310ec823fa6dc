import numpy as np
import pytest

from jointfuse.synthetic import JointTruth, default_geometry, default_mesh, simulate_joint


def small_dataset(seed=0, n_days=5, **truth):
    """Tiny joint dataset: 6x6 PCM, 3x3 AQUM, 8 monitors, coarse mesh."""
    geom = default_geometry(seed, n_pcm=6, n_aqum=3, n_urban=6, n_rural=2)
    mesh = default_mesh(geom, max_edge_inner=25.0, max_edge_outer=40.0, cutoff=1.0)
    sim = simulate_joint(JointTruth(**truth), mesh, geom, n_days=n_days, n_years=2, seed=seed)
    return geom, mesh, sim


@pytest.fixture(scope="session")
def small():
    return small_dataset(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_joint(small):
    from jointfuse.joint import build_joint_model
    from jointfuse.inference import fit
    geom, mesh, sim = small
    spec = build_joint_model(mesh, sim.pcm, sim.aqum, sim.monitors)
    return fit(spec, strategy="ccd")
