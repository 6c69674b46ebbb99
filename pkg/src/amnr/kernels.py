"""Kernels on unit vectors and Gram-matrix construction for GP priors.

Gram matrices get an escalating diagonal jitter until Cholesky succeeds;
factor vectors of decomposed tensors often collide on low-dimensional
spheres, so near-singular Grams are the norm rather than the exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import IllConditionedError, ShapeError

MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel: family plus bandwidth (length scale).

    ``matern`` supports nu in {1/2, 3/2, 5/2}; ``rbf`` ignores nu. The value
    at zero distance is exactly 1 for both families.
    """

    family: str = "matern"
    bandwidth: float = 1.0
    nu: float = 1.5

    def __post_init__(self):
        if self.family not in ("matern", "rbf"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.family == "matern" and self.nu not in MATERN_NUS:
            raise ValueError(f"matern nu must be one of {MATERN_NUS}, got {self.nu}")


@dataclass(frozen=True)
class JitterPolicy:
    initial: float = 1e-10
    growth: float = 10.0
    cap: float = 1e-4

    def ladder(self):
        values = []
        j = self.initial
        while j <= self.cap * (1.0 + 1e-9):
            values.append(j)
            j *= self.growth
        return values


@dataclass
class GramMatrix:
    """Symmetric PSD kernel matrix with the jitter actually added on the
    diagonal, plus its lower Cholesky factor."""

    matrix: np.ndarray
    jitter: float
    cholesky: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def kernel_from_distance(spec: KernelSpec, dist):
    """Kernel value(s) as a function of Euclidean distance."""
    d = np.asarray(dist, dtype=np.float64)
    h = spec.bandwidth
    if spec.family == "rbf":
        return np.exp(-(d**2) / (2.0 * h * h))
    if spec.nu == 0.5:
        return np.exp(-d / h)
    if spec.nu == 1.5:
        s = math.sqrt(3.0) * d / h
        return (1.0 + s) * np.exp(-s)
    s = math.sqrt(5.0) * d / h
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def kernel_eval(spec: KernelSpec, u, v) -> float:
    """Kernel value between two vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"vectors must share a 1-D shape: {u.shape} vs {v.shape}")
    return float(kernel_from_distance(spec, np.linalg.norm(u - v)))


def kernel_matrix(spec: KernelSpec, a, b) -> np.ndarray:
    """Cross-kernel matrix between two point sets (rows are points)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"point length mismatch: {a.shape[1]} vs {b.shape[1]}")
    return kernel_from_distance(spec, cdist(a, b))


def gram(spec: KernelSpec, points, jitter_policy: JitterPolicy = JitterPolicy()) -> GramMatrix:
    """Kernel Gram matrix over a point set, jittered until Cholesky succeeds.

    Raises IllConditionedError (naming near-duplicate point clusters) if the
    jitter cap is reached without a successful factorization.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dist = cdist(pts, pts)
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    k = kernel_from_distance(spec, dist)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 1.0)
    for jitter in jitter_policy.ladder():
        try:
            jittered = k + jitter * np.eye(pts.shape[0])
            chol = np.linalg.cholesky(jittered)
            return GramMatrix(matrix=jittered, jitter=jitter, cholesky=chol)
        except np.linalg.LinAlgError:
            continue
    dup = np.argwhere(np.triu(dist < 1e-12, k=1))
    pairs = [(int(i), int(j)) for i, j in dup[:5]]
    raise IllConditionedError(
        f"Gram matrix of {pts.shape[0]} points not factorizable at jitter cap "
        f"{jitter_policy.cap:g}; {len(dup)} near-duplicate pairs, e.g. {pairs}"
    )


def bandwidth_grid(points) -> np.ndarray:
    """Geometric bandwidth candidates around the median pairwise distance.

    Falls back to a fixed small grid when all points coincide.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 2:
        raise ValueError("need at least two points for a bandwidth grid")
    med = float(np.median(pdist(pts)))
    if med == 0.0:
        return np.array([0.1, 0.5, 1.0])
    return med * np.array([0.25, 0.5, 1.0, 2.0, 4.0])
