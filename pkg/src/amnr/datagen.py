"""Synthetic data-generating processes with seeded noise.

Three families: exactly low-rank inputs with a logistic sum-product
response, full-rank Gaussian inputs with a norm-driven logistic response,
and low-rank inputs with a smooth response built from a truncated cosine
basis (coefficients decaying like l^{-3/2} sin l, smoothness one). All
generators are pure functions of (spec, n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigurationError
from .tensor import Tensor, make_cp, reconstruct

KINDS = ("low-rank", "full-rank", "sobolev")


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process parameters.

    ``rank`` is the generating CP rank (ignored by ``full-rank``);
    ``basis_terms`` truncates the cosine-basis sum of the smooth dgp, with a
    tail below 0.09 at the default 1000 terms.
    """

    kind: str
    dims: tuple
    rank: int = 4
    noise_var: float = 1.0
    basis_terms: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown dgp kind {self.kind!r}")
        if not self.noise_var > 0:
            raise ConfigurationError("noise_var must be positive")
        if self.rank < 1 or self.basis_terms < 1:
            raise ConfigurationError("rank and basis_terms must be >= 1")
        if any(d < 1 for d in self.dims):
            raise ConfigurationError(f"invalid dims {self.dims}")


def projection_weights(dim: int) -> np.ndarray:
    """Fixed projection vector with j-th entry 0.1*j (1-indexed)."""
    return 0.1 * np.arange(1, dim + 1)


def logistic(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def _random_cp(spec: DgpSpec, rng):
    """Random canonical CP form: positive scales spread by rank-dependent
    offsets within one standard unit, uniform unit factors."""
    offsets = np.arange(spec.rank, 0, -1) / spec.rank
    lam = np.abs(rng.standard_normal(spec.rank)) + offsets
    factors = []
    for d in spec.dims:
        f = rng.standard_normal((d, spec.rank))
        f /= np.linalg.norm(f, axis=0)
        factors.append(f)
    return make_cp(lam, factors)


def _logistic_sum_product(form) -> float:
    """sum_r lambda_r prod_k logistic(<projection, factor_{r,k}>)."""
    total = 0.0
    for r in range(form.rank):
        prod = 1.0
        for f in form.factors:
            gamma = projection_weights(f.shape[0])
            prod *= float(logistic(gamma @ f[:, r]))
        total += form.lambdas[r] * prod
    return total


def gen_low_rank(spec: DgpSpec, n: int) -> Dataset:
    """Exactly rank-R inputs; response is the logistic sum-product of the
    projected factor vectors, evaluated on the stored canonical CP form."""
    if spec.kind != "low-rank":
        raise ConfigurationError(f"spec kind is {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    forms = [_random_cp(spec, rng) for _ in range(n)]
    tensors = [reconstruct(f) for f in forms]
    f_true = np.array([_logistic_sum_product(f) for f in forms])
    y = f_true + rng.normal(0.0, np.sqrt(spec.noise_var), size=n)
    return Dataset(tensors=tensors, y=y, true_f=f_true, cpforms=forms,
                   noise_var=spec.noise_var)


def full_rank_response(t: Tensor) -> float:
    """logistic(||X|| / prod dims) ** K."""
    dims = t.dims
    return float(logistic(t.norm() / np.prod(dims)) ** len(dims))


def gen_full_rank(spec: DgpSpec, n: int) -> Dataset:
    """I.i.d. standard-normal entries; the response saturates in the overall
    input norm, so no finite-rank structure fits it exactly."""
    if spec.kind != "full-rank":
        raise ConfigurationError(f"spec kind is {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    tensors = [Tensor(rng.standard_normal(spec.dims)) for _ in range(n)]
    f_true = np.array([full_rank_response(t) for t in tensors])
    y = f_true + rng.normal(0.0, np.sqrt(spec.noise_var), size=n)
    return Dataset(tensors=tensors, y=y, true_f=f_true, noise_var=spec.noise_var)


def cosine_basis(z, l: int):
    """Orthonormal cosine basis on [0, 1]: sqrt(2) cos((l - 1/2) pi z)."""
    return np.sqrt(2.0) * np.cos((l - 0.5) * np.pi * np.asarray(z, dtype=np.float64))


def basis_coefficient(l: int) -> float:
    return float(l ** (-1.5) * np.sin(l))


def smooth_local(z, terms: int):
    """Truncated basis expansion sum_l l^{-3/2} sin(l) phi_l(z)."""
    z = np.asarray(z, dtype=np.float64)
    ls = np.arange(1, terms + 1)
    coefs = ls ** (-1.5) * np.sin(ls)
    return np.sqrt(2.0) * np.cos(np.multiply.outer(z, (ls - 0.5) * np.pi)) @ coefs


def _smooth_sum_product(form, terms: int) -> float:
    """sum_r prod_k local(<projection, factor_{r,k}>) (unit component
    weights; scales enter only through the input tensor)."""
    total = 0.0
    for r in range(form.rank):
        prod = 1.0
        for f in form.factors:
            gamma = projection_weights(f.shape[0])
            prod *= float(smooth_local(gamma @ f[:, r], terms))
        total += prod
    return total


def gen_sobolev(spec: DgpSpec, n: int) -> Dataset:
    """Exactly rank-R inputs with the smooth cosine-basis response."""
    if spec.kind != "sobolev":
        raise ConfigurationError(f"spec kind is {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    forms = [_random_cp(spec, rng) for _ in range(n)]
    tensors = [reconstruct(f) for f in forms]
    f_true = np.array([_smooth_sum_product(f, spec.basis_terms) for f in forms])
    y = f_true + rng.normal(0.0, np.sqrt(spec.noise_var), size=n)
    return Dataset(tensors=tensors, y=y, true_f=f_true, cpforms=forms,
                   noise_var=spec.noise_var)


def generate(spec: DgpSpec, n: int) -> Dataset:
    """Dispatch on the dgp kind."""
    if spec.kind == "low-rank":
        return gen_low_rank(spec, n)
    if spec.kind == "full-rank":
        return gen_full_rank(spec, n)
    return gen_sobolev(spec, n)
