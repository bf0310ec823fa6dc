"""Hand-built model specs for the inference tests."""
import numpy as np
import scipy.sparse as sp

from jointfuse.latent import PriorSpec
from jointfuse.model import (FIXED, FixedEffects, Hyper, HyperPrior, LikelihoodBlock, ModelSpec,
                             ObservationBlock, Term)


class GenericGaussian:
    """Latent block with a given fixed precision (no hyperparameters)."""

    kind = "generic"

    def __init__(self, name, Q):
        self.name = name
        self.Q = sp.csr_matrix(Q)
        self.size = self.Q.shape[0]
        self.hypers = ()
        self.constraint = None
        self.rank = self.size
        self._ld = float(np.linalg.slogdet(self.Q.toarray())[1])

    def precision(self, h):
        return self.Q, self._ld


def rows_block(values, name="obs"):
    n = len(values)
    return ObservationBlock(name, np.arange(n, dtype=float), np.zeros(n), np.zeros(n, dtype=int),
                            np.asarray(values, dtype=float), monitor_id=np.array([f"r{i}" for i in range(n)]))


def linear_spec(Q, A, y, log_v=0.0, noise_prior=None, fixed_noise=False):
    """y = A theta + eps, theta ~ N(0, Q^-1), eps ~ N(0, exp(log_v))."""
    A = sp.csr_matrix(A)
    comp = GenericGaussian("theta", Q)
    block = rows_block(y)
    prior = noise_prior or PriorSpec("normal", {"mean": 0.0, "var": 4.0})
    hyp = Hyper("eps.log_var", "log_var", log_v, fixed=fixed_noise)
    return ModelSpec("linear", [comp], [LikelihoodBlock("obs", block, "eps.log_var")], [hyp],
                     [HyperPrior(("eps.log_var",), prior)],
                     {"obs": lambda r: [Term("theta", A[np.asarray(r.x, dtype=int)])]})


def scalar_spec(y, q, log_v=0.0):
    """One latent node with prior precision q observed once with noise exp(log_v)."""
    return linear_spec(np.array([[q]]), np.ones((1, 1)), [y], log_v)


def fixed_effect_spec(y, X, names, prior_var=1000.0, log_v=0.0):
    fe = FixedEffects(names, prior_var)
    X = np.asarray(X, dtype=float)
    block = rows_block(y)
    hyp = Hyper("eps.log_var", "log_var", log_v)
    return ModelSpec("fe", [fe], [LikelihoodBlock("obs", block, "eps.log_var")], [hyp],
                     [HyperPrior(("eps.log_var",), PriorSpec("normal", {"mean": 0.0, "var": 4.0}))],
                     {"obs": lambda r: [Term(FIXED, X[np.asarray(r.x, dtype=int)])]})


def random_instance(rng, n=150, m=300, density=0.05):
    B = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(1 << 31)))
    Q = (B @ B.T + sp.identity(n) * 2.0).toarray()
    A = sp.random(m, n, density=0.03, random_state=np.random.RandomState(rng.integers(1 << 31)))
    y = rng.standard_normal(m)
    return Q, A.toarray(), y
