"""Multivariate Gaussian sampling and closed-form GP regression.

The regressor doubles as the exactness oracle for the Monte-Carlo estimator
and as the engine of the flattened-tensor baseline.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ShapeError
from .kernels import GramMatrix, JitterPolicy, KernelSpec, gram, kernel_matrix


class MvnSampler:
    """Zero-mean multivariate normal sampler from a Gram matrix.

    Samples are ``L @ z`` with ``z`` standard normal, so their covariance is
    the jittered Gram. Identical seeds produce identical sample streams.
    """

    def __init__(self, gram_matrix: GramMatrix, seed=0):
        self.chol = gram_matrix.cholesky
        self.dimension = gram_matrix.size
        self.rng = np.random.default_rng(seed)

    def sample(self, count: int) -> np.ndarray:
        """Draw ``count`` samples, returned as rows of a (count, p) array."""
        if count < 1:
            raise ValueError("count must be >= 1")
        z = self.rng.standard_normal((count, self.dimension))
        return z @ self.chol.T


class GpRegressor:
    """Zero-mean GP regression with a cached Cholesky factorization.

    The training covariance is the jittered Gram plus ``noise_var`` on the
    diagonal. Immutable after construction; prediction is thread-safe.
    """

    def __init__(self, train_x, train_y, spec: KernelSpec, noise_var: float,
                 jitter_policy: JitterPolicy = JitterPolicy()):
        x = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
        y = np.asarray(train_y, dtype=np.float64).reshape(-1)
        if x.shape[0] != y.size:
            raise ShapeError(f"{x.shape[0]} inputs but {y.size} targets")
        if noise_var < 0:
            raise ValueError("noise variance must be >= 0")
        self.train_x = x
        self.train_y = y
        self.spec = spec
        self.noise_var = float(noise_var)
        g = gram(spec, x, jitter_policy)
        self.jitter = g.jitter
        cov = g.matrix + self.noise_var * np.eye(x.shape[0])
        self._chol = cho_factor(cov, lower=True)
        self._alpha = cho_solve(self._chol, y)

    def predict(self, query_x):
        """Posterior mean and (noise-free) variance at the query points."""
        q = np.atleast_2d(np.asarray(query_x, dtype=np.float64))
        ks = kernel_matrix(self.spec, self.train_x, q)
        mean = ks.T @ self._alpha
        v = solve_triangular(self._chol[0], ks, lower=True)
        var = np.clip(1.0 + self.jitter - np.sum(v * v, axis=0), 0.0, None)
        return mean, var


def gp_fit_predict(train_x, train_y, spec: KernelSpec, noise_var: float, query_x):
    """Fit a GP and predict in one call; returns (means, variances)."""
    return GpRegressor(train_x, train_y, spec, noise_var).predict(query_x)
